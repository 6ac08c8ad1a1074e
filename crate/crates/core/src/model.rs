//! Triple scoring and its analytic gradients.
//!
//! For a query `(h, r)` the score of a tail `t` is
//! `(x ∘ y) · z`, where `x`, `y`, `z` are the decoded rows of `h`, `r` and
//! `t`, and every grade-2 coefficient of `z` is fixed to one. Since the
//! grade-2 part does not depend on the tail, every score splits into a
//! tail-independent bias plus a dot product between a query vector `phi` and
//! the tail row, which is what makes scoring all tails at once cheap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::algebra::{clifford_product, CliffordElement, Signature};
use crate::error::{Error, Result};

/// Standard deviation of the initial embedding values.
pub const INIT_STD: f64 = 0.01;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { expected: rows * cols, actual: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }
}

/// Entity and relation parameters for one signature.
///
/// Relation rows include inverse relations. Only the first
/// `sig.used_width()` scalars of each row are read when scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    sig: Signature,
    entities: Matrix,
    relations: Matrix,
}

impl EmbeddingTable {
    pub fn new(sig: Signature, entities: Matrix, relations: Matrix) -> Result<Self> {
        if entities.cols() != sig.d() || relations.cols() != sig.d() {
            return Err(Error::ShapeMismatch(format!(
                "row widths {} and {} do not match d = {}",
                entities.cols(),
                relations.cols(),
                sig.d()
            )));
        }
        if !entities.as_slice().iter().chain(relations.as_slice()).all(|v| v.is_finite()) {
            return Err(Error::ShapeMismatch("embedding table contains non-finite values".into()));
        }
        Ok(EmbeddingTable { sig, entities, relations })
    }

    /// I.i.d. normal initialization with standard deviation [`INIT_STD`].
    pub fn random(sig: Signature, num_entities: usize, num_relation_rows: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal distribution");
        let mut draw = |rows: usize| {
            let data = (0..rows * sig.d()).map(|_| normal.sample(&mut rng)).collect();
            Matrix { rows, cols: sig.d(), data }
        };
        let entities = draw(num_entities);
        let relations = draw(num_relation_rows);
        EmbeddingTable { sig, entities, relations }
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn entities(&self) -> &Matrix {
        &self.entities
    }

    pub fn relations(&self) -> &Matrix {
        &self.relations
    }

    pub fn entities_mut(&mut self) -> &mut Matrix {
        &mut self.entities
    }

    pub fn relations_mut(&mut self) -> &mut Matrix {
        &mut self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relation_rows(&self) -> usize {
        self.relations.rows()
    }

    pub fn entity_row(&self, id: usize) -> Result<&[f64]> {
        check_id("entity", id, self.num_entities())?;
        Ok(self.entities.row(id))
    }

    pub fn relation_row(&self, id: usize) -> Result<&[f64]> {
        check_id("relation", id, self.num_relation_rows())?;
        Ok(self.relations.row(id))
    }

    pub fn is_finite(&self) -> bool {
        self.entities.as_slice().iter().chain(self.relations.as_slice()).all(|v| v.is_finite())
    }
}

fn check_id(kind: &'static str, id: usize, size: usize) -> Result<()> {
    if id >= size {
        return Err(Error::IdOutOfRange { kind, id, size });
    }
    Ok(())
}

/// Interprets a row as a grade-≤1 element; trailing unused scalars are dropped.
pub fn decode(row: &[f64], sig: &Signature) -> Result<CliffordElement> {
    if row.len() != sig.d() {
        return Err(Error::LengthMismatch { expected: sig.d(), actual: row.len() });
    }
    CliffordElement::from_flat(sig.m(), row[..sig.used_width()].to_vec())
}

/// `(x ∘ y) · z` with all grade-2 tail coefficients equal to one.
pub fn score_triple(x: &CliffordElement, y: &CliffordElement, z: &CliffordElement, sig: &Signature) -> Result<f64> {
    z.check(sig)?;
    let prod = clifford_product(x, y, sig)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut score = dot(&prod.scalar, z.block(0));
    for (t, coeff) in prod.grade1.iter().enumerate() {
        score += dot(coeff, z.block(t + 1));
    }
    score += prod.grade2.values().flatten().sum::<f64>();
    Ok(score)
}

/// Split of a query's scores: `score(t) = bias + <phi, tail row>`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryScoreParts {
    pub phi: Vec<f64>,
    pub bias: f64,
}

/// Computes `phi` and `bias` from the used prefixes of a head and relation row.
pub fn query_parts_from_rows(x: &[f64], y: &[f64], sig: &Signature) -> QueryScoreParts {
    let m = sig.m();
    let n = sig.generators();
    let squares = sig.squares();
    let (x0, y0) = (&x[..m], &y[..m]);
    let mut phi = vec![0.0; sig.used_width()];

    for c in 0..m {
        phi[c] = x0[c] * y0[c];
    }
    for t in 1..=n {
        let (xt, yt) = (&x[t * m..(t + 1) * m], &y[t * m..(t + 1) * m]);
        let sq = squares[t - 1];
        for c in 0..m {
            phi[c] += sq * xt[c] * yt[c];
            phi[t * m + c] = x0[c] * yt[c] + xt[c] * y0[c];
        }
    }

    // sum over a < b of (x_a y_b - x_b y_a), via running prefix sums
    let mut bias = 0.0;
    if n >= 2 {
        let mut px = x[m..2 * m].to_vec();
        let mut py = y[m..2 * m].to_vec();
        for b in 2..=n {
            let (xb, yb) = (&x[b * m..(b + 1) * m], &y[b * m..(b + 1) * m]);
            for c in 0..m {
                bias += px[c] * yb[c] - xb[c] * py[c];
                px[c] += xb[c];
                py[c] += yb[c];
            }
        }
    }
    QueryScoreParts { phi, bias }
}

/// Accumulates into `dx` and `dy` the gradient of
/// `<dphi, phi(x, y)> + dbias * bias(x, y)`.
pub fn query_parts_backward(
    x: &[f64],
    y: &[f64],
    dphi: &[f64],
    dbias: f64,
    sig: &Signature,
    dx: &mut [f64],
    dy: &mut [f64],
) {
    let m = sig.m();
    let n = sig.generators();
    let squares = sig.squares();
    let mut tot_x = vec![0.0; m];
    let mut tot_y = vec![0.0; m];
    for t in 1..=n {
        for c in 0..m {
            tot_x[c] += x[t * m + c];
            tot_y[c] += y[t * m + c];
        }
    }

    let mut pre_x = vec![0.0; m];
    let mut pre_y = vec![0.0; m];
    for t in 1..=n {
        let sq = squares[t - 1];
        let base = t * m;
        for c in 0..m {
            let (x0, y0) = (x[c], y[c]);
            let (xt, yt) = (x[base + c], y[base + c]);
            let (d0, dt) = (dphi[c], dphi[base + c]);

            dx[c] += dt * yt;
            dy[c] += dt * xt;

            // d bias / d x_t = sum_{b>t} y_b - sum_{b<t} y_b, and symmetrically for y
            let after_y = tot_y[c] - pre_y[c] - yt;
            let after_x = tot_x[c] - pre_x[c] - xt;
            dx[base + c] += sq * d0 * yt + dt * y0 + dbias * (after_y - pre_y[c]);
            dy[base + c] += sq * d0 * xt + dt * x0 + dbias * (pre_x[c] - after_x);

            pre_x[c] += xt;
            pre_y[c] += yt;
        }
    }
    for c in 0..m {
        dx[c] += dphi[c] * y[c];
        dy[c] += dphi[c] * x[c];
    }
}

pub fn query_parts(h: usize, r: usize, table: &EmbeddingTable) -> Result<QueryScoreParts> {
    let w = table.sig().used_width();
    let x = &table.entity_row(h)?[..w];
    let y = &table.relation_row(r)?[..w];
    Ok(query_parts_from_rows(x, y, table.sig()))
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Scores of every entity as the tail of `(h, r, ?)`, written into `out`.
pub fn scores_from_parts(parts: &QueryScoreParts, entities: &Matrix, out: &mut [f64]) {
    let w = parts.phi.len();
    for (t, s) in out.iter_mut().enumerate() {
        *s = parts.bias + dot(&entities.row(t)[..w], &parts.phi);
    }
}

pub fn score_all_tails(h: usize, r: usize, table: &EmbeddingTable) -> Result<Vec<f64>> {
    let parts = query_parts(h, r, table)?;
    let mut out = vec![0.0; table.num_entities()];
    scores_from_parts(&parts, table.entities(), &mut out);
    Ok(out)
}

/// Gradients of `sum_t weight[t] * score(h, r, t)` for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGradients {
    /// Head-role gradient of row `h`.
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    /// Per-entity gradients: tail role for every row, plus the head role on row `h`.
    pub entities: Matrix,
}

/// Backward pass of one query with precomputed parts, accumulating into
/// full-size gradient buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_query_gradients(
    table: &EmbeddingTable,
    h: usize,
    r: usize,
    parts: &QueryScoreParts,
    tail_grad: &[f64],
    entity_grad: &mut Matrix,
    relation_grad: &mut Matrix,
    scratch: &mut Vec<f64>,
) {
    let sig = table.sig();
    let w = sig.used_width();
    let entities = table.entities();
    scratch.clear();
    scratch.resize(w, 0.0);
    let mut dbias = 0.0;
    for (t, &g) in tail_grad.iter().enumerate() {
        dbias += g;
        let row = &entities.row(t)[..w];
        for (d, v) in scratch.iter_mut().zip(row) {
            *d += g * v;
        }
        let grow = &mut entity_grad.row_mut(t)[..w];
        for (d, p) in grow.iter_mut().zip(&parts.phi) {
            *d += g * p;
        }
    }
    let x = &entities.row(h)[..w];
    let y = &table.relations().row(r)[..w];
    let mut dx = vec![0.0; w];
    query_parts_backward(x, y, scratch, dbias, sig, &mut dx, &mut relation_grad.row_mut(r)[..w]);
    for (d, v) in entity_grad.row_mut(h)[..w].iter_mut().zip(&dx) {
        *d += v;
    }
}

pub fn score_gradients(h: usize, r: usize, tail_grad: &[f64], table: &EmbeddingTable) -> Result<ScoreGradients> {
    if tail_grad.len() != table.num_entities() {
        return Err(Error::ShapeMismatch(format!(
            "tail gradient has length {}, table has {} entities",
            tail_grad.len(),
            table.num_entities()
        )));
    }
    let parts = query_parts(h, r, table)?;
    let d = table.sig().d();
    let w = table.sig().used_width();

    let mut entities = Matrix::zeros(table.num_entities(), d);
    let mut relations = Matrix::zeros(table.num_relation_rows(), d);
    let mut scratch = Vec::new();
    accumulate_query_gradients(table, h, r, &parts, tail_grad, &mut entities, &mut relations, &mut scratch);

    // head role alone, recomputed from the same tail-side sums
    let mut head = vec![0.0; d];
    let mut dphi = vec![0.0; w];
    let mut dbias = 0.0;
    for (t, &g) in tail_grad.iter().enumerate() {
        dbias += g;
        for (a, v) in dphi.iter_mut().zip(&table.entities().row(t)[..w]) {
            *a += g * v;
        }
    }
    let x = &table.entities().row(h)[..w];
    let y = &table.relations().row(r)[..w];
    let mut unused = vec![0.0; w];
    query_parts_backward(x, y, &dphi, dbias, table.sig(), &mut head[..w], &mut unused);

    Ok(ScoreGradients { head, relation: relations.row(r).to_vec(), entities })
}
