//! Searching the `(p, q, r)` lattice for the signature with the best
//! validation MRR.
//!
//! Three strategies are provided: an exhaustive sweep over all `p+q+r ≤ d`,
//! a sweep restricted to signatures where `1+p+q+r` divides `d`, and a greedy
//! search that starts at `(1, 1, 1)` and repeatedly expands the best
//! configuration found so far by ±1 steps on each coordinate.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::Signature;
use crate::data::{Split, TripleStore};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{EmbeddingTable, Matrix};
use crate::train::{train, TrainConfig};

/// A lattice point. Components may be negative while neighbours are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Conf {
    pub p: i64,
    pub q: i64,
    pub r: i64,
}

impl Conf {
    pub const fn new(p: i64, q: i64, r: i64) -> Self {
        Conf { p, q, r }
    }

    pub fn is_non_negative(&self) -> bool {
        self.p >= 0 && self.q >= 0 && self.r >= 0
    }

    /// The signature for row width `d`, if the configuration is admissible.
    pub fn signature(&self, d: usize) -> Option<Signature> {
        if !self.is_non_negative() {
            return None;
        }
        Signature::new(self.p as usize, self.q as usize, self.r as usize, d).ok()
    }
}

impl From<Signature> for Conf {
    fn from(sig: Signature) -> Self {
        Conf::new(sig.p() as i64, sig.q() as i64, sig.r() as i64)
    }
}

impl fmt::Display for Conf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.p, self.q, self.r)
    }
}

/// All `(p, q, r)` with `p + q + r ≤ d`, in lexicographic order.
pub fn les_enumerate(d: usize) -> Vec<Conf> {
    let d = d as i64;
    let mut out = Vec::new();
    for p in 0..=d {
        for q in 0..=d - p {
            for r in 0..=d - p - q {
                out.push(Conf::new(p, q, r));
            }
        }
    }
    out
}

/// All `(p, q, r)` with `1 + p + q + r` dividing `d`, in lexicographic order.
pub fn gsdc_enumerate(d: usize) -> Vec<Conf> {
    les_enumerate(d).into_iter().filter(|c| d.is_multiple_of((1 + c.p + c.q + c.r) as usize)).collect()
}

/// The `(-1, 0, 1)^3` offsets of `current` that are not in `seen`.
pub fn generate_conf(seen: &BTreeSet<Conf>, current: Conf) -> Vec<Conf> {
    let mut out = Vec::with_capacity(27);
    for dp in -1..=1 {
        for dq in -1..=1 {
            for dr in -1..=1 {
                let c = Conf::new(current.p + dp, current.q + dq, current.r + dr);
                if !seen.contains(&c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub val_mrr: f64,
    pub train_seconds: f64,
}

impl SearchRecord {
    pub fn conf(&self) -> Conf {
        Conf::new(self.p as i64, self.q as i64, self.r as i64)
    }

    fn sort_key(&self) -> f64 {
        if self.val_mrr.is_nan() {
            f64::NEG_INFINITY
        } else {
            self.val_mrr
        }
    }

    /// Queue order: higher MRR first, then lexicographically smaller `(p, q, r)`.
    pub fn queue_cmp(&self, other: &Self) -> Ordering {
        other.sort_key().total_cmp(&self.sort_key()).then_with(|| self.conf().cmp(&other.conf()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: SearchRecord,
    /// Every scored record, in scoring order.
    pub trace: Vec<SearchRecord>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub val_mrr: f64,
    pub train_seconds: f64,
}

/// Maps a signature to its validation MRR.
pub trait Evaluator: Sync {
    fn evaluate(&self, sig: Signature) -> Result<Evaluation>;
}

impl<F> Evaluator for F
where
    F: Fn(Signature) -> Result<f64> + Sync,
{
    fn evaluate(&self, sig: Signature) -> Result<Evaluation> {
        let start = Instant::now();
        let val_mrr = self(sig)?;
        Ok(Evaluation { val_mrr, train_seconds: start.elapsed().as_secs_f64() })
    }
}

/// Trains with a fixed config and reports the validation MRR.
pub struct ValidationMrr<'a> {
    pub store: &'a TripleStore,
    pub cfg: TrainConfig,
}

impl ValidationMrr<'_> {
    /// Trains `sig` and evaluates it on `split`.
    pub fn run(&self, sig: Signature, split: Split) -> Result<(EmbeddingTable, f64)> {
        let outcome = train(self.store, sig, &self.cfg)?;
        let report = evaluate(&outcome.table, self.store, split)?;
        Ok((outcome.table, report.mrr))
    }
}

impl Evaluator for ValidationMrr<'_> {
    fn evaluate(&self, sig: Signature) -> Result<Evaluation> {
        let start = Instant::now();
        let (_, val_mrr) = self.run(sig, Split::Valid)?;
        Ok(Evaluation { val_mrr, train_seconds: start.elapsed().as_secs_f64() })
    }
}

/// Stores evaluations on disk, one JSON file per signature, under a key
/// derived from the dataset and training config.
pub struct CachedEvaluator<E> {
    inner: E,
    dir: PathBuf,
    key: String,
}

impl<E: Evaluator> CachedEvaluator<E> {
    pub fn new(inner: E, dir: impl Into<PathBuf>, dataset_fingerprint: &str, cfg: &TrainConfig) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut hasher = Sha256::new();
        hasher.update(dataset_fingerprint.as_bytes());
        hasher.update(serde_json::to_vec(cfg)?);
        let key = hex::encode(&hasher.finalize()[..12]);
        Ok(CachedEvaluator { inner, dir, key })
    }

    fn path(&self, sig: &Signature) -> PathBuf {
        self.dir.join(format!("{}_p{}_q{}_r{}_d{}.json", self.key, sig.p(), sig.q(), sig.r(), sig.d()))
    }
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn evaluate(&self, sig: Signature) -> Result<Evaluation> {
        let path = self.path(&sig);
        if let Ok(bytes) = fs::read(&path) {
            if let Ok(hit) = serde_json::from_slice::<Evaluation>(&bytes) {
                return Ok(hit);
            }
        }
        let fresh = self.inner.evaluate(sig)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(&fresh)?)?;
        fs::rename(&tmp, &path)?;
        Ok(fresh)
    }
}

/// Scores every non-negative candidate that forms a valid signature for `d`
/// and appends the records to `prior`. Others are skipped silently.
pub fn score_confs(
    candidates: &[Conf],
    mut prior: Vec<SearchRecord>,
    d: usize,
    evaluator: &dyn Evaluator,
) -> Result<Vec<SearchRecord>> {
    let admissible: Vec<Signature> = candidates.iter().filter_map(|c| c.signature(d)).collect();
    let scored: Vec<SearchRecord> = admissible
        .par_iter()
        .map(|&sig| {
            let eval = evaluator.evaluate(sig)?;
            Ok(SearchRecord {
                p: sig.p(),
                q: sig.q(),
                r: sig.r(),
                val_mrr: eval.val_mrr,
                train_seconds: eval.train_seconds,
            })
        })
        .collect::<Result<_>>()?;
    prior.extend(scored);
    Ok(prior)
}

/// Greedy search over the lattice, starting at `(1, 1, 1)`.
///
/// Each iteration scores the unseen neighbours of the current configuration,
/// sorts all records scored so far, and moves to the top one. The search
/// stops when the top does not change or after `max_iterations`.
pub fn greedy_search(max_iterations: usize, d: usize, evaluator: &dyn Evaluator) -> Result<SearchResult> {
    if max_iterations == 0 {
        return Err(Error::InvalidArgument("greedy search needs at least one iteration".into()));
    }
    if d == 0 {
        return Err(Error::InvalidSignature { p: 0, q: 0, r: 0, d });
    }
    let mut current = Conf::new(1, 1, 1);
    let mut seen = BTreeSet::new();
    let mut queue: Vec<SearchRecord> = Vec::new();
    let mut iterations = 0;
    let mut top = None;

    for _ in 0..max_iterations {
        iterations += 1;
        let to_score = generate_conf(&seen, current);
        queue = score_confs(&to_score, queue, d, evaluator)?;
        let mut sorted = queue.clone();
        sorted.sort_by(SearchRecord::queue_cmp);
        let best = sorted[0];
        top = Some(best);
        if best.conf() == current {
            break;
        }
        current = best.conf();
        seen.extend(to_score);
    }

    let best = top.expect("at least one iteration ran and (0, 0, 0) is always admissible");
    Ok(SearchResult { best, trace: queue, iterations })
}

/// Outcome of an exhaustive sweep. Configurations with no valid signature
/// for `d` are listed in `skipped` instead of being scored.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub result: SearchResult,
    pub skipped: Vec<Conf>,
}

/// Scores every configuration in `confs` once.
pub fn sweep(confs: &[Conf], d: usize, evaluator: &dyn Evaluator) -> Result<SweepResult> {
    let skipped: Vec<Conf> = confs.iter().filter(|c| c.signature(d).is_none()).copied().collect();
    let trace = score_confs(confs, Vec::new(), d, evaluator)?;
    let best = trace
        .iter()
        .copied()
        .min_by(SearchRecord::queue_cmp)
        .ok_or_else(|| Error::InvalidArgument(format!("no admissible configuration for d = {d}")))?;
    Ok(SweepResult { result: SearchResult { best, trace, iterations: 1 }, skipped })
}

/// Writes a search trace as CSV with header `p,q,r,val_mrr,train_seconds`.
/// Skipped configurations follow the scored ones with `nan` MRR.
pub fn write_trace_csv(records: &[SearchRecord], skipped: &[Conf], mut out: impl Write) -> Result<()> {
    writeln!(out, "p,q,r,val_mrr,train_seconds")?;
    for rec in records {
        writeln!(out, "{},{},{},{},{}", rec.p, rec.q, rec.r, rec.val_mrr, rec.train_seconds)?;
    }
    for c in skipped {
        writeln!(out, "{},{},{},nan,0", c.p, c.q, c.r)?;
    }
    Ok(())
}

/// Concatenated `(head, relation, tail)` rows of every original training
/// triple, in file order, from a table trained in `Cl_{1,1,1}`.
pub fn vsp_export_features(store: &TripleStore, table: &EmbeddingTable) -> Result<Matrix> {
    let sig = table.sig();
    if (sig.p(), sig.q(), sig.r()) != (1, 1, 1) {
        return Err(Error::SignatureMismatch {
            expected: "(1, 1, 1)".into(),
            actual: format!("({}, {}, {})", sig.p(), sig.q(), sig.r()),
        });
    }
    let triples = store.triples(Split::Train);
    if triples.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let d = sig.d();
    let mut data = Vec::with_capacity(triples.len() * 3 * d);
    for t in triples {
        data.extend_from_slice(table.entity_row(t.head)?);
        data.extend_from_slice(table.relation_row(t.relation)?);
        data.extend_from_slice(table.entity_row(t.tail)?);
    }
    Matrix::from_vec(triples.len(), 3 * d, data)
}

/// CSV with header `h_0..h_{d-1},r_0..r_{d-1},t_0..t_{d-1}`.
pub fn write_features_csv(features: &Matrix, mut out: impl Write) -> Result<()> {
    let d = features.cols() / 3;
    let header: Vec<String> =
        ["h", "r", "t"].iter().flat_map(|prefix| (0..d).map(move |i| format!("{prefix}_{i}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..features.rows() {
        let row: Vec<String> = features.row(i).iter().map(f64::to_string).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Little-endian `u64` row count followed by the row-major `f64` values.
pub fn write_features_bin(features: &Matrix, mut out: impl Write) -> Result<()> {
    out.write_all(&(features.rows() as u64).to_le_bytes())?;
    for v in features.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub(f: impl Fn(i64, i64, i64) -> f64 + Sync) -> impl Fn(Signature) -> Result<f64> + Sync {
        move |sig: Signature| Ok(f(sig.p() as i64, sig.q() as i64, sig.r() as i64))
    }

    #[test]
    fn les_small_cases() {
        let one = les_enumerate(1);
        assert_eq!(one, vec![Conf::new(0, 0, 0), Conf::new(0, 0, 1), Conf::new(0, 1, 0), Conf::new(1, 0, 0)]);
        assert_eq!(les_enumerate(2).len(), 10);
        assert_eq!(les_enumerate(16).len(), 969);
    }

    #[test]
    fn gsdc_small_cases() {
        assert_eq!(gsdc_enumerate(1), vec![Conf::new(0, 0, 0)]);
        assert_eq!(gsdc_enumerate(6).len(), 31);
        assert_eq!(gsdc_enumerate(16).len(), 186);
    }

    #[test]
    fn generate_full_neighbourhood() {
        let all = generate_conf(&BTreeSet::new(), Conf::new(1, 1, 1));
        assert_eq!(all.len(), 27);
        assert_eq!(all[0], Conf::new(0, 0, 0));
        assert!(all.contains(&Conf::new(1, 1, 1)));
        assert_eq!(all[26], Conf::new(2, 2, 2));

        let seen: BTreeSet<Conf> = all.into_iter().collect();
        assert!(generate_conf(&seen, Conf::new(1, 1, 1)).is_empty());

        let from_origin = generate_conf(&BTreeSet::new(), Conf::new(0, 0, 0));
        assert_eq!(from_origin.len(), 27);
        assert_eq!(from_origin[0], Conf::new(-1, -1, -1));
    }

    #[test]
    fn score_skips_inadmissible() {
        let eval = stub(|_, _, _| 0.5);
        let out = score_confs(&[Conf::new(-1, 0, 0), Conf::new(0, -1, 2)], Vec::new(), 16, &eval).unwrap();
        assert!(out.is_empty());
        let out = score_confs(&[Conf::new(0, 0, 0)], Vec::new(), 16, &eval).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].val_mrr, 0.5);
        // 1 + 2 + 2 + 0 > 4
        let out = score_confs(&[Conf::new(2, 2, 0)], out, 4, &eval).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn score_records_stub_values() {
        let f = |p: i64, q: i64, r: i64| 1.0 / (1.0 + ((p - 2).pow(2) + (q - 1).pow(2) + r) as f64);
        let eval = stub(f);
        let cands = generate_conf(&BTreeSet::new(), Conf::new(1, 1, 1));
        let out = score_confs(&cands, Vec::new(), 16, &eval).unwrap();
        assert_eq!(out.len(), 27);
        for rec in &out {
            assert_eq!(rec.val_mrr, f(rec.p as i64, rec.q as i64, rec.r as i64));
        }
    }

    #[test]
    fn greedy_stops_immediately_at_start_maximum() {
        let eval = stub(|p, q, r| 1.0 / (1.0 + ((p - 1).pow(2) + (q - 1).pow(2) + (r - 1).pow(2)) as f64));
        let res = greedy_search(10, 16, &eval).unwrap();
        assert_eq!(res.best.conf(), Conf::new(1, 1, 1));
        assert_eq!(res.iterations, 1);
        assert_eq!(res.trace.len(), 27);
    }

    #[test]
    fn greedy_walks_to_remote_maximum() {
        let eval = stub(|p, q, r| 1.0 / (1.0 + ((p - 3).pow(2) + (q - 1).pow(2) + (r - 1).pow(2)) as f64));
        let res = greedy_search(10, 16, &eval).unwrap();
        assert_eq!(res.best.conf(), Conf::new(3, 1, 1));
        assert_eq!(res.iterations, 3);
        let unique: BTreeSet<Conf> = res.trace.iter().map(SearchRecord::conf).collect();
        assert_eq!(unique.len(), res.trace.len());
    }

    #[test]
    fn greedy_respects_iteration_budget() {
        let eval = stub(|p, _, _| p as f64 / 100.0);
        let res = greedy_search(2, 16, &eval).unwrap();
        assert_eq!(res.iterations, 2);
        assert_eq!(res.best.conf(), Conf::new(3, 0, 0));
    }

    #[test]
    fn greedy_ties_prefer_smaller_configuration() {
        let eval = stub(|_, _, _| 0.5);
        let res = greedy_search(10, 16, &eval).unwrap();
        // every record ties, so (0, 0, 0) leads the queue and is then confirmed
        assert_eq!(res.best.conf(), Conf::new(0, 0, 0));
        assert_eq!(res.iterations, 2);
    }

    #[test]
    fn greedy_argument_checks() {
        let eval = stub(|_, _, _| 0.5);
        assert!(greedy_search(0, 16, &eval).is_err());
        assert!(greedy_search(3, 0, &eval).is_err());
    }

    #[test]
    fn sweep_reports_skipped() {
        let eval = stub(|p, q, r| (p + 2 * q + 3 * r) as f64);
        let out = sweep(&les_enumerate(2), 2, &eval).unwrap();
        assert_eq!(out.result.trace.len(), 4);
        assert_eq!(out.skipped.len(), 6);
        assert_eq!(out.result.best.conf(), Conf::new(0, 0, 1));

        let mut csv = Vec::new();
        write_trace_csv(&out.result.trace, &out.skipped, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "p,q,r,val_mrr,train_seconds");
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[10], "2,0,0,nan,0");
    }

    #[test]
    fn cache_reuses_results() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = AtomicUsize::new(0);
        let counting = |_: Signature| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(0.25)
        };
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig::default();
        let sig = Signature::new(0, 1, 0, 16).unwrap();
        let cached = CachedEvaluator::new(&counting, dir.path(), "abc", &cfg).unwrap();
        let first = cached.evaluate(sig).unwrap();
        let second = cached.evaluate(sig).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);

        let other_cfg = TrainConfig { epochs: 3, ..cfg };
        let other = CachedEvaluator::new(&counting, dir.path(), "abc", &other_cfg).unwrap();
        other.evaluate(sig).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn feature_writers() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        let mut csv = Vec::new();
        write_features_csv(&m, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "h_0,r_0,t_0\n1,2,3\n4,5,6.5\n");

        let mut bin = Vec::new();
        write_features_bin(&m, &mut bin).unwrap();
        assert_eq!(bin.len(), 8 + 6 * 8);
        assert_eq!(u64::from_le_bytes(bin[..8].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bin[48..56].try_into().unwrap()), 6.5);
    }
}
