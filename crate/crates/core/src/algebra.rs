//! Arithmetic in the degenerate Clifford algebra `Cl_{p,q,r}(R^m)`.
//!
//! Generators are indexed by a single flat index `1..=p+q+r`: the first `p`
//! square to `+1`, the next `q` square to `-1` and the last `r` are nilpotent.
//! Every coefficient is itself a vector in `R^m` and products act element-wise
//! on those vectors.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest generator count accepted by [`oracle_product`].
pub const ORACLE_MAX_GENERATORS: usize = 10;

/// Block size `floor(d / (1+p+q+r))`, rejecting signatures that leave no room.
pub fn derive_m(d: usize, p: usize, q: usize, r: usize) -> Result<usize> {
    let m = d / (1 + p + q + r);
    if m == 0 {
        return Err(Error::InvalidSignature { p, q, r, d });
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorClass {
    Positive,
    Negative,
    Null,
}

impl GeneratorClass {
    /// The value of `e * e` for a generator of this class.
    pub fn square(self) -> f64 {
        match self {
            GeneratorClass::Positive => 1.0,
            GeneratorClass::Negative => -1.0,
            GeneratorClass::Null => 0.0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawSignature {
    p: usize,
    q: usize,
    r: usize,
    d: usize,
}

/// Algebra descriptor `(p, q, r)` together with the row width `d`.
///
/// The block size `m` is always derived, so a `Signature` can never carry an
/// inconsistent `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSignature", into = "RawSignature")]
pub struct Signature {
    p: usize,
    q: usize,
    r: usize,
    d: usize,
    m: usize,
}

impl TryFrom<RawSignature> for Signature {
    type Error = Error;

    fn try_from(raw: RawSignature) -> Result<Self> {
        Signature::new(raw.p, raw.q, raw.r, raw.d)
    }
}

impl From<Signature> for RawSignature {
    fn from(sig: Signature) -> Self {
        RawSignature { p: sig.p, q: sig.q, r: sig.r, d: sig.d }
    }
}

impl Signature {
    pub fn new(p: usize, q: usize, r: usize, d: usize) -> Result<Self> {
        let m = derive_m(d, p, q, r)?;
        Ok(Signature { p, q, r, d, m })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of generators, `p + q + r`.
    pub fn generators(&self) -> usize {
        self.p + self.q + self.r
    }

    /// Number of coefficient blocks of a grade-≤1 element, `1 + p + q + r`.
    pub fn blocks(&self) -> usize {
        1 + self.generators()
    }

    /// Scalars of a row that are actually read, `(1+p+q+r) * m`.
    pub fn used_width(&self) -> usize {
        self.blocks() * self.m
    }

    /// Class of generator `t` (1-based).
    ///
    /// # Panics
    ///
    /// Panics if `t` is zero or exceeds `p + q + r`.
    pub fn class(&self, t: usize) -> GeneratorClass {
        assert!(t >= 1 && t <= self.generators(), "generator index {t} out of range");
        if t <= self.p {
            GeneratorClass::Positive
        } else if t <= self.p + self.q {
            GeneratorClass::Negative
        } else {
            GeneratorClass::Null
        }
    }

    /// Squares of generators `1..=p+q+r`, in index order.
    pub fn squares(&self) -> Vec<f64> {
        (1..=self.generators()).map(|t| self.class(t).square()).collect()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cl_{{{},{},{}}}(R^{}) [d={}]", self.p, self.q, self.r, self.m, self.d)
    }
}

/// A grade-≤1 element: a scalar block followed by one block per generator.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordElement {
    m: usize,
    data: Vec<f64>,
}

impl CliffordElement {
    /// Builds an element from explicit blocks; all blocks must share one length.
    pub fn new(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let m = blocks.first().map(Vec::len).unwrap_or(0);
        if m == 0 {
            return Err(Error::ShapeMismatch("element needs at least one non-empty block".into()));
        }
        if let Some(bad) = blocks.iter().find(|b| b.len() != m) {
            return Err(Error::ShapeMismatch(format!(
                "block of length {} in an element with block length {m}",
                bad.len()
            )));
        }
        Ok(CliffordElement { m, data: blocks.concat() })
    }

    /// Builds an element from `blocks * m` contiguous scalars.
    pub fn from_flat(m: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || data.is_empty() || !data.len().is_multiple_of(m) {
            return Err(Error::ShapeMismatch(format!("{} scalars do not split into blocks of length {m}", data.len())));
        }
        Ok(CliffordElement { m, data })
    }

    pub fn zeros(sig: &Signature) -> Self {
        CliffordElement { m: sig.m(), data: vec![0.0; sig.used_width()] }
    }

    /// The multiplicative identity: all-ones scalar block, zero elsewhere.
    pub fn one(sig: &Signature) -> Self {
        let mut e = Self::zeros(sig);
        e.block_mut(0).fill(1.0);
        e
    }

    /// Unit element on generator `t`: all-ones in block `t`, zero elsewhere.
    pub fn basis(sig: &Signature, t: usize) -> Self {
        let mut e = Self::zeros(sig);
        e.block_mut(t).fill(1.0);
        e
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_blocks(&self) -> usize {
        self.data.len() / self.m
    }

    pub fn block(&self, t: usize) -> &[f64] {
        &self.data[t * self.m..(t + 1) * self.m]
    }

    pub fn block_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.m..(t + 1) * self.m]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn check(&self, sig: &Signature) -> Result<()> {
        if self.m != sig.m() || self.num_blocks() != sig.blocks() {
            return Err(Error::ShapeMismatch(format!(
                "element has {} blocks of length {}, signature {sig} needs {} of length {}",
                self.num_blocks(),
                self.m,
                sig.blocks(),
                sig.m()
            )));
        }
        Ok(())
    }
}

/// Grade-≤2 result of multiplying two grade-≤1 elements.
///
/// `grade2[(a, b)]` with `a < b` is the coefficient of `e_a e_b`; the
/// reversed ordering is implied by anticommutation and never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductResult {
    pub scalar: Vec<f64>,
    pub grade1: Vec<Vec<f64>>,
    pub grade2: BTreeMap<(usize, usize), Vec<f64>>,
}

impl ProductResult {
    /// Coefficient of generator `t` (1-based).
    pub fn vector(&self, t: usize) -> &[f64] {
        &self.grade1[t - 1]
    }

    /// Coefficient of `e_a e_b` with `a < b`.
    pub fn bivector(&self, a: usize, b: usize) -> Option<&[f64]> {
        self.grade2.get(&(a, b)).map(Vec::as_slice)
    }
}

/// Clifford product `x ∘ y` of two grade-≤1 elements, expanded up to grade 2.
pub fn clifford_product(x: &CliffordElement, y: &CliffordElement, sig: &Signature) -> Result<ProductResult> {
    x.check(sig)?;
    y.check(sig)?;
    let m = sig.m();
    let n = sig.generators();
    let squares = sig.squares();

    let mut scalar: Vec<f64> = x.block(0).iter().zip(y.block(0)).map(|(a, b)| a * b).collect();
    for (t, &sq) in (1..=n).zip(&squares) {
        if sq == 0.0 {
            continue;
        }
        for ((s, a), b) in scalar.iter_mut().zip(x.block(t)).zip(y.block(t)) {
            *s += sq * a * b;
        }
    }

    let grade1 = (1..=n)
        .map(|t| (0..m).map(|c| x.block(0)[c] * y.block(t)[c] + x.block(t)[c] * y.block(0)[c]).collect())
        .collect();

    let mut grade2 = BTreeMap::new();
    for a in 1..=n {
        for b in a + 1..=n {
            let coeff = (0..m).map(|c| x.block(a)[c] * y.block(b)[c] - x.block(b)[c] * y.block(a)[c]).collect();
            grade2.insert((a, b), coeff);
        }
    }

    Ok(ProductResult { scalar, grade1, grade2 })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sum of block-wise dot products over every block, nilpotent ones included.
pub fn inner_product(x: &CliffordElement, y: &CliffordElement, sig: &Signature) -> Result<f64> {
    x.check(sig)?;
    y.check(sig)?;
    Ok(x.blocks().zip(y.blocks()).map(|(a, b)| dot(a, b)).sum())
}

/// Squared norm over the non-degenerate blocks `0..=p+q`.
pub fn norm_squared(x: &CliffordElement, sig: &Signature) -> Result<f64> {
    x.check(sig)?;
    Ok(x.blocks().take(1 + sig.p() + sig.q()).map(|b| dot(b, b)).sum())
}

/// A general multivector over `n` generators, one coefficient block per blade.
///
/// Blade `mask` contains generator `t + 1` iff bit `t` of `mask` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct FullMultivector {
    pub n: usize,
    pub m: usize,
    pub coeffs: Vec<Vec<f64>>,
}

impl FullMultivector {
    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        if n > ORACLE_MAX_GENERATORS {
            return Err(Error::OracleScaleExceeded(n));
        }
        Ok(FullMultivector { n, m, coeffs: vec![vec![0.0; m]; 1 << n] })
    }

    /// Embeds a grade-≤1 element.
    pub fn from_element(x: &CliffordElement, sig: &Signature) -> Result<Self> {
        x.check(sig)?;
        let mut mv = Self::zeros(sig.generators(), sig.m())?;
        mv.coeffs[0].copy_from_slice(x.block(0));
        for t in 1..=sig.generators() {
            mv.coeffs[1 << (t - 1)].copy_from_slice(x.block(t));
        }
        Ok(mv)
    }

    /// Embeds a grade-≤2 product result.
    pub fn from_product(prod: &ProductResult, sig: &Signature) -> Result<Self> {
        let mut mv = Self::zeros(sig.generators(), sig.m())?;
        mv.coeffs[0].clone_from(&prod.scalar);
        for (t, v) in prod.grade1.iter().enumerate() {
            mv.coeffs[1 << t].clone_from(v);
        }
        for (&(a, b), v) in &prod.grade2 {
            mv.coeffs[(1 << (a - 1)) | (1 << (b - 1))].clone_from(v);
        }
        Ok(mv)
    }

    pub fn blade(&self, mask: usize) -> &[f64] {
        &self.coeffs[mask]
    }

    pub fn grade(mask: usize) -> usize {
        mask.count_ones() as usize
    }
}

/// Sign and scale of the blade product `e_A e_B`, and the resulting blade.
///
/// Moves each generator of `B` leftwards past the generators of `A` with a
/// larger index, then contracts the generators both blades share.
fn blade_product(a: usize, b: usize, squares: &[f64]) -> (f64, usize) {
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let bit = rest.trailing_zeros();
        swaps += (a >> (bit + 1)).count_ones();
        rest &= rest - 1;
    }
    let mut factor = if swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut common = a & b;
    while common != 0 {
        let bit = common.trailing_zeros() as usize;
        factor *= squares[bit];
        common &= common - 1;
    }
    (factor, a ^ b)
}

/// Full geometric product, blade by blade. Exponential in `n`; a test oracle.
pub fn oracle_product(x: &FullMultivector, y: &FullMultivector, sig: &Signature) -> Result<FullMultivector> {
    let n = sig.generators();
    if n > ORACLE_MAX_GENERATORS {
        return Err(Error::OracleScaleExceeded(n));
    }
    if x.n != n || y.n != n || x.m != y.m {
        return Err(Error::ShapeMismatch(format!(
            "oracle operands have (n, m) = ({}, {}) and ({}, {}), signature has n = {n}",
            x.n, x.m, y.n, y.m
        )));
    }
    let squares = sig.squares();
    let mut out = FullMultivector::zeros(n, x.m)?;
    for (a, xa) in x.coeffs.iter().enumerate() {
        if xa.iter().all(|v| *v == 0.0) {
            continue;
        }
        for (b, yb) in y.coeffs.iter().enumerate() {
            let (factor, blade) = blade_product(a, b, &squares);
            if factor == 0.0 {
                continue;
            }
            for ((o, u), v) in out.coeffs[blade].iter_mut().zip(xa).zip(yb) {
                *o += factor * u * v;
            }
        }
    }
    Ok(out)
}
