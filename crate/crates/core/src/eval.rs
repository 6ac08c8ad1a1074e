//! Filtered link-prediction metrics.

use serde::{Deserialize, Serialize};

use crate::data::{Split, TripleStore};
use crate::error::{Error, Result};
use crate::model::{score_all_tails, EmbeddingTable};

/// Filtered rank of `true_tail`.
///
/// Entities in `known_tails` other than the true one are skipped. Every
/// remaining entity whose score is not strictly below the true score counts
/// as ranked above it, so ties (and NaN) are resolved pessimistically.
/// `known_tails` must be sorted ascending.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn filtered_rank(scores: &[f64], true_tail: usize, known_tails: &[usize]) -> Result<usize> {
    debug_assert!(known_tails.windows(2).all(|w| w[0] < w[1]));
    if known_tails.binary_search(&true_tail).is_err() || true_tail >= scores.len() {
        return Err(Error::TrueTailMissing(true_tail));
    }
    let target = scores[true_tail];
    let mut known = known_tails.iter().peekable();
    let mut rank = 1;
    for (t, &s) in scores.iter().enumerate() {
        while known.next_if(|&&k| k < t).is_some() {}
        if known.next_if_eq(&&t).is_some() {
            continue;
        }
        if !(s < target) {
            rank += 1;
        }
    }
    Ok(rank)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
}

impl DirectionReport {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        let n = ranks.len() as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        DirectionReport {
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            num_queries: ranks.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Directions {
    /// `(h, r, ?)` queries.
    pub tail: DirectionReport,
    /// `(?, r, t)` queries, asked as `(t, r⁻¹, ?)`.
    pub head: DirectionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
    pub directions: Directions,
}

impl EvalReport {
    pub fn from_ranks(tail_ranks: &[usize], head_ranks: &[usize]) -> Self {
        let all: Vec<usize> = tail_ranks.iter().chain(head_ranks).copied().collect();
        let total = DirectionReport::from_ranks(&all);
        EvalReport {
            mrr: total.mrr,
            hits1: total.hits1,
            hits3: total.hits3,
            hits10: total.hits10,
            num_queries: total.num_queries,
            directions: Directions {
                tail: DirectionReport::from_ranks(tail_ranks),
                head: DirectionReport::from_ranks(head_ranks),
            },
        }
    }
}

/// Filtered ranks of every triple in `split`, as (tail ranks, head ranks).
pub fn split_ranks(table: &EmbeddingTable, store: &TripleStore, split: Split) -> Result<(Vec<usize>, Vec<usize>)> {
    if table.num_entities() != store.num_entities() || table.num_relation_rows() != store.num_relation_rows() {
        return Err(Error::ShapeMismatch(format!(
            "table has {} entities and {} relation rows, dataset needs {} and {}",
            table.num_entities(),
            table.num_relation_rows(),
            store.num_entities(),
            store.num_relation_rows()
        )));
    }
    let vocab = store.vocab();
    let mut tail_ranks = Vec::new();
    let mut head_ranks = Vec::new();
    for t in store.triples(split) {
        let scores = score_all_tails(t.head, t.relation, table)?;
        tail_ranks.push(filtered_rank(&scores, t.tail, store.known_answers(t.head, t.relation))?);
        let inverse = vocab.inverse(t.relation);
        let scores = score_all_tails(t.tail, inverse, table)?;
        head_ranks.push(filtered_rank(&scores, t.head, store.known_answers(t.tail, inverse))?);
    }
    Ok((tail_ranks, head_ranks))
}

pub fn evaluate(table: &EmbeddingTable, store: &TripleStore, split: Split) -> Result<EvalReport> {
    if store.triples(split).is_empty() {
        return Err(Error::EmptySplit(split.name()));
    }
    let (tail, head) = split_ranks(table, store, split)?;
    Ok(EvalReport::from_ranks(&tail, &head))
}
