#![allow(dead_code)]

use std::path::PathBuf;

use decal_core::algebra::{oracle_product, FullMultivector};
use decal_core::model::Matrix;
use decal_core::{CliffordElement, EmbeddingTable, Signature, TripleStore};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn dataset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..=scale)).collect()
}

pub fn random_element(rng: &mut ChaCha8Rng, sig: &Signature) -> CliffordElement {
    CliffordElement::from_flat(sig.m(), uniform_vec(rng, sig.used_width(), 1.0)).unwrap()
}

pub fn random_table(rng: &mut ChaCha8Rng, sig: Signature, ne: usize, nr: usize) -> EmbeddingTable {
    let d = sig.d();
    let entities = Matrix::from_vec(ne, d, uniform_vec(rng, ne * d, 1.0)).unwrap();
    let relations = Matrix::from_vec(nr, d, uniform_vec(rng, nr * d, 1.0)).unwrap();
    EmbeddingTable::new(sig, entities, relations).unwrap()
}

/// Random signature with `p + q + r <= max_gen` and block size `<= max_m`.
pub fn random_signature(rng: &mut ChaCha8Rng, max_gen: usize, max_m: usize) -> Signature {
    let n = rng.gen_range(0..=max_gen);
    let p = rng.gen_range(0..=n);
    let q = rng.gen_range(0..=n - p);
    let r = n - p - q;
    let m = rng.gen_range(1..=max_m);
    // Leftover columns exercise the floor convention.
    let d = (1 + n) * m + rng.gen_range(0..=n);
    Signature::new(p, q, r, d).unwrap()
}

/// Score via the full blade expansion: grade 0 and 1 contract with the
/// tail, every higher blade is weighted by one.
pub fn oracle_score(x: &CliffordElement, y: &CliffordElement, z: &CliffordElement, sig: &Signature) -> f64 {
    let fx = FullMultivector::from_element(x, sig).unwrap();
    let fy = FullMultivector::from_element(y, sig).unwrap();
    let prod = oracle_product(&fx, &fy, sig).unwrap();
    let mut score = 0.0;
    for (mask, coeff) in prod.coeffs.iter().enumerate() {
        match FullMultivector::grade(mask) {
            0 => score += dot(coeff, z.block(0)),
            1 => score += dot(coeff, z.block(mask.trailing_zeros() as usize + 1)),
            _ => score += coeff.iter().sum::<f64>(),
        }
    }
    score
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub fn distmult(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter().zip(r).zip(t).map(|((a, b), c)| a * b * c).sum()
}

/// Re(<h, r, conj(t)>) with the first half of each row real, second imaginary.
pub fn complex_score(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let k = h.len() / 2;
    (0..k)
        .map(|i| {
            let h = Complex64::new(h[i], h[k + i]);
            let r = Complex64::new(r[i], r[k + i]);
            let t = Complex64::new(t[i], t[k + i]);
            (h * r * t.conj()).re
        })
        .sum()
}

/// Straight-line score for Cl_{p,q}: separate index spaces for the
/// positive and negative generators.
pub fn keci_score(p: usize, q: usize, m: usize, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let a0 = &h[..m];
    let b0 = &r[..m];
    let c0 = &t[..m];
    let ap = |i: usize| &h[m * (1 + i)..m * (2 + i)];
    let bp = |i: usize| &r[m * (1 + i)..m * (2 + i)];
    let cp = |i: usize| &t[m * (1 + i)..m * (2 + i)];
    let aq = |j: usize| &h[m * (1 + p + j)..m * (2 + p + j)];
    let bq = |j: usize| &r[m * (1 + p + j)..m * (2 + p + j)];
    let cq = |j: usize| &t[m * (1 + p + j)..m * (2 + p + j)];

    let mut s = 0.0;
    for c in 0..m {
        let mut sigma0 = a0[c] * b0[c];
        for i in 0..p {
            sigma0 += ap(i)[c] * bp(i)[c];
        }
        for j in 0..q {
            sigma0 -= aq(j)[c] * bq(j)[c];
        }
        s += sigma0 * c0[c];
        for i in 0..p {
            s += (a0[c] * bp(i)[c] + ap(i)[c] * b0[c]) * cp(i)[c];
        }
        for j in 0..q {
            s += (a0[c] * bq(j)[c] + aq(j)[c] * b0[c]) * cq(j)[c];
        }
        for i in 0..p {
            for k in i + 1..p {
                s += ap(i)[c] * bp(k)[c] - ap(k)[c] * bp(i)[c];
            }
        }
        for j in 0..q {
            for k in j + 1..q {
                s += aq(j)[c] * bq(k)[c] - aq(k)[c] * bq(j)[c];
            }
        }
        for i in 0..p {
            for j in 0..q {
                s += ap(i)[c] * bq(j)[c] - aq(j)[c] * bp(i)[c];
            }
        }
    }
    s
}

/// A small graph with two relations and a held-out split.
pub fn toy_store() -> TripleStore {
    let mut train = Vec::new();
    for i in 0..6 {
        train.push([format!("n{i}"), "next".to_owned(), format!("n{}", i + 1)]);
    }
    for i in 0..3 {
        train.push([format!("n{i}"), "likes".to_owned(), format!("n{}", 6 - i)]);
    }
    let valid = vec![["n3".to_owned(), "likes".to_owned(), "n3".to_owned()]];
    let test = vec![
        ["n6".to_owned(), "next".to_owned(), "n0".to_owned()],
        ["n0".to_owned(), "next".to_owned(), "n2".to_owned()],
    ];
    TripleStore::from_named(&train, &valid, &test).unwrap()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Product of two basis blades by sorting the concatenated generator word
/// with adjacent swaps, then contracting equal neighbours.
pub fn word_blade_product(a: usize, b: usize, squares: &[f64]) -> (f64, usize) {
    let gens = |mask: usize| (0..squares.len()).filter(move |t| mask >> t & 1 == 1);
    let mut word: Vec<usize> = gens(a).chain(gens(b)).collect();
    let mut sign = 1.0;
    for i in 0..word.len() {
        for j in 0..word.len() - 1 - i {
            if word[j] > word[j + 1] {
                word.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    let mut mask = 0;
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == word[i + 1] {
            sign *= squares[word[i]];
            i += 2;
        } else {
            mask |= 1 << word[i];
            i += 1;
        }
    }
    (sign, mask)
}

/// Full product of two multivectors using [`word_blade_product`].
pub fn word_product(x: &FullMultivector, y: &FullMultivector, squares: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; x.m]; x.coeffs.len()];
    for (a, xa) in x.coeffs.iter().enumerate() {
        for (b, yb) in y.coeffs.iter().enumerate() {
            let (s, blade) = word_blade_product(a, b, squares);
            for c in 0..x.m {
                out[blade][c] += s * xa[c] * yb[c];
            }
        }
    }
    out
}

/// Signatures the gradient checks sweep, each with a small `d`.
pub const GRADIENT_SIGNATURES: [(usize, usize, usize, usize); 5] =
    [(0, 0, 0, 4), (0, 1, 0, 6), (1, 1, 1, 9), (3, 0, 2, 12), (0, 3, 1, 10)];

fn score_sum(table: &EmbeddingTable, h: usize, r: usize, weights: &[f64]) -> f64 {
    let sig = table.sig();
    let x = decal_core::model::decode(table.entity_row(h).unwrap(), sig).unwrap();
    let y = decal_core::model::decode(table.relation_row(r).unwrap(), sig).unwrap();
    weights
        .iter()
        .enumerate()
        .map(|(t, w)| {
            let z = decal_core::model::decode(table.entity_row(t).unwrap(), sig).unwrap();
            w * decal_core::model::score_triple(&x, &y, &z, sig).unwrap()
        })
        .sum()
}

/// Central difference of `f` with respect to every parameter of `table`,
/// as (entity gradient, relation gradient).
pub fn numeric_gradient(table: &EmbeddingTable, step: f64, f: impl Fn(&EmbeddingTable) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut work = table.clone();
    let mut ent = Vec::new();
    for i in 0..table.entities().as_slice().len() {
        let orig = work.entities().as_slice()[i];
        work.entities_mut().as_mut_slice()[i] = orig + step;
        let up = f(&work);
        work.entities_mut().as_mut_slice()[i] = orig - step;
        let down = f(&work);
        work.entities_mut().as_mut_slice()[i] = orig;
        ent.push((up - down) / (2.0 * step));
    }
    let mut rel = Vec::new();
    for i in 0..table.relations().as_slice().len() {
        let orig = work.relations().as_slice()[i];
        work.relations_mut().as_mut_slice()[i] = orig + step;
        let up = f(&work);
        work.relations_mut().as_mut_slice()[i] = orig - step;
        let down = f(&work);
        work.relations_mut().as_mut_slice()[i] = orig;
        rel.push((up - down) / (2.0 * step));
    }
    (ent, rel)
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| relative_error(*a, *n)).fold(0.0, f64::max)
}

/// Worst relative error of `score_gradients` against finite differences on
/// one random query with random tail weights.
pub fn score_gradient_error(rng: &mut ChaCha8Rng, sig: Signature, ne: usize, nr: usize) -> f64 {
    let table = random_table(rng, sig, ne, nr);
    let h = rng.gen_range(0..ne);
    let r = rng.gen_range(0..nr);
    let weights = uniform_vec(rng, ne, 1.0);
    let grads = decal_core::model::score_gradients(h, r, &weights, &table).unwrap();
    let (ent, rel) = numeric_gradient(&table, 1e-5, |t| score_sum(t, h, r, &weights));
    let mut rel_analytic = vec![0.0; rel.len()];
    let d = sig.d();
    rel_analytic[r * d..(r + 1) * d].copy_from_slice(&grads.relation);
    max_relative_error(grads.entities.as_slice(), &ent).max(max_relative_error(&rel_analytic, &rel))
}

/// Worst relative error of the batch loss gradient against finite
/// differences on a random table for `toy_store`.
pub fn loss_gradient_error(rng: &mut ChaCha8Rng, sig: Signature, smoothing: f64) -> f64 {
    let store = toy_store();
    let table = random_table(rng, sig, store.num_entities(), store.num_relation_rows());
    let queries: Vec<(usize, usize)> =
        store.kvsall(decal_core::Split::Train).keys().copied().filter(|_| rng.gen_bool(0.7)).collect();
    let queries = if queries.is_empty() { vec![(0, 0)] } else { queries };
    let (_, grads) = decal_core::train::batch_gradients(&table, &store, &queries, smoothing).unwrap();
    let (ent, rel) = numeric_gradient(&table, 1e-5, |t| {
        decal_core::train::batch_gradients(t, &store, &queries, smoothing).unwrap().0
    });
    max_relative_error(grads.entities.as_slice(), &ent).max(max_relative_error(grads.relations.as_slice(), &rel))
}

pub fn sig_of((p, q, r, d): (usize, usize, usize, usize)) -> Signature {
    Signature::new(p, q, r, d).unwrap()
}

/// Largest deviation of `score_triple` from the DistMult, ComplEx and Keci
/// references over `n` random instances each.
pub fn reduction_errors(rng: &mut ChaCha8Rng, n: usize) -> [f64; 3] {
    let score = |sig: &Signature, h: &[f64], r: &[f64], t: &[f64]| {
        let dec = |v: &[f64]| decal_core::model::decode(v, sig).unwrap();
        decal_core::model::score_triple(&dec(h), &dec(r), &dec(t), sig).unwrap()
    };
    let mut worst = [0.0f64; 3];
    for _ in 0..n {
        let d = rng.gen_range(1..=12);
        let sig = Signature::new(0, 0, 0, d).unwrap();
        let [h, r, t] = [0; 3].map(|_| uniform_vec(rng, d, 1.0));
        worst[0] = worst[0].max((score(&sig, &h, &r, &t) - distmult(&h, &r, &t)).abs());

        let d = 2 * rng.gen_range(1..=6);
        let sig = Signature::new(0, 1, 0, d).unwrap();
        let [h, r, t] = [0; 3].map(|_| uniform_vec(rng, d, 1.0));
        worst[1] = worst[1].max((score(&sig, &h, &r, &t) - complex_score(&h, &r, &t)).abs());

        let p = rng.gen_range(0..=3);
        let q = rng.gen_range(0..=3);
        let m = rng.gen_range(1..=3);
        let d = (1 + p + q) * m;
        let sig = Signature::new(p, q, 0, d).unwrap();
        let [h, r, t] = [0; 3].map(|_| uniform_vec(rng, d, 1.0));
        worst[2] = worst[2].max((score(&sig, &h, &r, &t) - keci_score(p, q, m, &h, &r, &t)).abs());
    }
    worst
}

/// Tail ids sorted by descending score, ties by ascending id.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids
}

/// Number of random queries whose tail ranking changes when the bias is dropped.
pub fn bias_rank_violations(rng: &mut ChaCha8Rng, queries: usize) -> usize {
    let mut violations = 0;
    for _ in 0..queries {
        let sig = random_signature(rng, 5, 3);
        let ne = rng.gen_range(2..=40);
        let nr = rng.gen_range(1..=4);
        let table = random_table(rng, sig, ne, nr);
        let (h, r) = (rng.gen_range(0..ne), rng.gen_range(0..nr));
        let with_bias = decal_core::model::score_all_tails(h, r, &table).unwrap();
        let mut parts = decal_core::model::query_parts(h, r, &table).unwrap();
        parts.bias = 0.0;
        let mut without = vec![0.0; ne];
        decal_core::model::scores_from_parts(&parts, table.entities(), &mut without);
        if ranking(&with_bias) != ranking(&without) {
            violations += 1;
        }
    }
    violations
}
