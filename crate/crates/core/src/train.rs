//! KvsAll training: each distinct `(head, relation)` query of the training
//! split is scored against every entity, with binary cross-entropy against
//! the indicator of its observed answers, and parameters are updated with
//! Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::Signature;
use crate::data::{Split, TripleStore};
use crate::error::{Error, Result};
use crate::model::{accumulate_query_gradients, query_parts, scores_from_parts, EmbeddingTable, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Minimum loss decrease that counts as an improvement.
    pub min_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub d: usize,
    pub epochs: usize,
    /// Number of `(head, relation)` queries per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub label_smoothing: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// L2 penalty added to the gradient before the Adam update.
    pub weight_decay: f64,
    /// Clip the global gradient norm of each step to this value.
    pub grad_clip: Option<f64>,
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 16,
            epochs: 250,
            batch_size: 1024,
            learning_rate: 0.1,
            seed: 1,
            label_smoothing: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: None,
            early_stopping: None,
        }
    }
}

impl TrainConfig {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_owned()));
        if self.d == 0 {
            return bad("d must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label smoothing must lie in [0, 1)");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || self.weight_decay < 0.0 {
            return bad("Adam epsilon must be positive and weight decay non-negative");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("gradient clip must be positive");
        }
        Ok(())
    }
}

/// Mean binary cross-entropy over all entities of one query and its
/// gradient with respect to the logits.
///
/// Targets are smoothed to `y * (1 - smoothing) + smoothing / n`.
pub fn bce_loss(logits: &[f64], targets: &[f64], smoothing: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; logits.len()];
    let loss = bce_loss_into(logits, targets, smoothing, &mut grad)?;
    Ok((loss, grad))
}

fn bce_loss_into(logits: &[f64], targets: &[f64], smoothing: f64, grad: &mut [f64]) -> Result<f64> {
    if targets.len() != logits.len() {
        return Err(Error::LengthMismatch { expected: logits.len(), actual: targets.len() });
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::InvalidArgument(format!("label smoothing {smoothing} outside [0, 1)")));
    }
    let n = logits.len() as f64;
    let inv_n = 1.0 / n;
    let floor = smoothing * inv_n;
    let keep = 1.0 - smoothing;
    // Per entity: -[y log σ(s) + (1-y) log(1-σ(s))] = max(s, 0) + ln(1 + e^{-|s|}) - y s.
    // The logarithms are summed as the log of a running product of factors in
    // (1, 2], flushed often enough that the product stays finite.
    const FLUSH: usize = 512;
    let mut linear = 0.0;
    let mut log_sum = 0.0;
    for ((ls, ys), gs) in logits.chunks(FLUSH).zip(targets.chunks(FLUSH)).zip(grad.chunks_mut(FLUSH)) {
        let mut product = 1.0;
        for ((&s, &y), g) in ls.iter().zip(ys).zip(gs) {
            let y = y * keep + floor;
            let e = (-s.abs()).exp();
            let inv = 1.0 / (1.0 + e);
            linear += s.max(0.0) - y * s;
            product *= 1.0 + e;
            let sig = if s >= 0.0 { inv } else { e * inv };
            *g = (sig - y) * inv_n;
        }
        log_sum += product.ln();
    }
    Ok((linear + log_sum) * inv_n)
}

/// Gradient buffers shaped like an [`EmbeddingTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub entities: Matrix,
    pub relations: Matrix,
}

impl Gradients {
    pub fn zeros_like(table: &EmbeddingTable) -> Self {
        let d = table.sig().d();
        Gradients {
            entities: Matrix::zeros(table.num_entities(), d),
            relations: Matrix::zeros(table.num_relation_rows(), d),
        }
    }

    fn clear(&mut self) {
        self.entities.fill(0.0);
        self.relations.fill(0.0);
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.entities.as_slice().iter().chain(self.relations.as_slice())
    }
}

/// Adam moments for both parameter matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Gradients,
    pub second: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(table: &EmbeddingTable) -> Self {
        AdamState { first: Gradients::zeros_like(table), second: Gradients::zeros_like(table), step: 0 }
    }
}

/// One dense, bias-corrected Adam update of every parameter.
pub fn adam_step(
    table: &mut EmbeddingTable,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let d = table.sig().d();
    let same = |m: &Matrix, rows: usize| m.rows() == rows && m.cols() == d;
    let (ne, nr) = (table.num_entities(), table.num_relation_rows());
    if !same(&grads.entities, ne)
        || !same(&grads.relations, nr)
        || !same(&state.first.entities, ne)
        || !same(&state.first.relations, nr)
        || !same(&state.second.entities, ne)
        || !same(&state.second.relations, nr)
    {
        return Err(Error::ShapeMismatch("gradients or Adam state do not match the table".into()));
    }
    if !grads.values().all(|g| g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }

    let scale = match cfg.grad_clip {
        Some(limit) => {
            let norm = grads.values().map(|g| g * g).sum::<f64>().sqrt();
            if norm > limit {
                limit / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };

    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let step = state.step as i32;
    let correction1 = 1.0 - b1.powi(step);
    let correction2 = 1.0 - b2.powi(step);

    let update = |params: &mut [f64], grad: &[f64], first: &mut [f64], second: &mut [f64]| {
        for (((w, &g), m), v) in params.iter_mut().zip(grad).zip(first).zip(second) {
            let g = g * scale + cfg.weight_decay * *w;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    };
    update(
        table.entities_mut().as_mut_slice(),
        grads.entities.as_slice(),
        state.first.entities.as_mut_slice(),
        state.second.entities.as_mut_slice(),
    );
    update(
        table.relations_mut().as_mut_slice(),
        grads.relations.as_slice(),
        state.first.relations.as_mut_slice(),
        state.second.relations.as_mut_slice(),
    );
    Ok(())
}

/// Scratch space reused across queries of a step.
struct Workspace {
    scores: Vec<f64>,
    targets: Vec<f64>,
    grad: Vec<f64>,
    dphi: Vec<f64>,
}

impl Workspace {
    fn new(num_entities: usize) -> Self {
        Workspace {
            scores: vec![0.0; num_entities],
            targets: vec![0.0; num_entities],
            grad: vec![0.0; num_entities],
            dphi: Vec::new(),
        }
    }
}

fn accumulate_batch(
    table: &EmbeddingTable,
    store: &TripleStore,
    queries: &[(usize, usize)],
    smoothing: f64,
    grads: &mut Gradients,
    ws: &mut Workspace,
) -> Result<f64> {
    let index = store.kvsall(Split::Train);
    let weight = 1.0 / queries.len() as f64;
    let mut loss = 0.0;
    for &(h, r) in queries {
        let parts = query_parts(h, r, table)?;
        scores_from_parts(&parts, table.entities(), &mut ws.scores);
        let answers = index.get(&(h, r)).map(Vec::as_slice).unwrap_or(&[]);
        for &t in answers {
            ws.targets[t] = 1.0;
        }
        loss += bce_loss_into(&ws.scores, &ws.targets, smoothing, &mut ws.grad)?;
        for &t in answers {
            ws.targets[t] = 0.0;
        }
        for g in ws.grad.iter_mut() {
            *g *= weight;
        }
        accumulate_query_gradients(
            table,
            h,
            r,
            &parts,
            &ws.grad,
            &mut grads.entities,
            &mut grads.relations,
            &mut ws.dphi,
        );
    }
    Ok(loss * weight)
}

/// Mean KvsAll loss of a set of queries and its gradient, as used for one
/// optimizer step.
pub fn batch_gradients(
    table: &EmbeddingTable,
    store: &TripleStore,
    queries: &[(usize, usize)],
    smoothing: f64,
) -> Result<(f64, Gradients)> {
    if queries.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let mut grads = Gradients::zeros_like(table);
    let mut ws = Workspace::new(table.num_entities());
    let loss = accumulate_batch(table, store, queries, smoothing, &mut grads, &mut ws)?;
    Ok((loss, grads))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    /// Mean per-query loss of each completed epoch.
    pub loss_trace: Vec<f64>,
}

pub fn train(store: &TripleStore, sig: Signature, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(store, sig, cfg, |_, _| {})
}

/// Trains from a fresh seeded initialization, calling `on_epoch(epoch, loss)`
/// after each epoch.
pub fn train_with(
    store: &TripleStore,
    sig: Signature,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if sig.d() != cfg.d {
        return Err(Error::InvalidArgument(format!("signature has d = {}, config has d = {}", sig.d(), cfg.d)));
    }
    let mut queries: Vec<(usize, usize)> = store.kvsall(Split::Train).keys().copied().collect();
    if queries.is_empty() {
        return Err(Error::EmptyTrainSet);
    }

    let mut table = EmbeddingTable::random(sig, store.num_entities(), store.num_relation_rows(), cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);

    let mut state = AdamState::new(&table);
    let mut grads = Gradients::zeros_like(&table);
    let mut ws = Workspace::new(store.num_entities());
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        queries.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in queries.chunks(cfg.batch_size) {
            grads.clear();
            let loss = accumulate_batch(&table, store, batch, cfg.label_smoothing, &mut grads, &mut ws)?;
            adam_step(&mut table, &grads, &mut state, cfg)?;
            epoch_loss += loss * batch.len() as f64;
        }
        let epoch_loss = epoch_loss / queries.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        loss_trace.push(epoch_loss);
        on_epoch(epoch, epoch_loss);

        if let Some(stop) = cfg.early_stopping {
            if best - epoch_loss > stop.min_delta {
                best = epoch_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= stop.patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome { table, loss_trace })
}
