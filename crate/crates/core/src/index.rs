//! Multi-indices, words and sparse polynomials in several complex variables.
//!
//! Every matrix in the crate is written in the graded lexicographic basis
//! produced by [`enumerate_basis`]: monomials are sorted by total degree, and
//! within one degree by decreasing first exponent, then decreasing second
//! exponent, and so on. For `d = 2` this reads `1, z1, z2, z1^2, z1 z2, z2^2`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigUint;
use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector of a monomial `z^α`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    pub fn unit(d: usize, j: usize) -> Self {
        let mut v = vec![0; d];
        v[j] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other` when every entry stays non-negative.
    pub fn minus(&self, other: &MultiIndex) -> Option<MultiIndex> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            out.push(a.checked_sub(*b)?);
        }
        Some(MultiIndex(out))
    }

    pub fn bump(&self, j: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[j] += 1;
        MultiIndex(v)
    }

    /// `z^α` at a point.
    pub fn monomial(&self, z: &[Complex64]) -> Complex64 {
        self.0
            .iter()
            .zip(z)
            .fold(Complex64::one(), |acc, (&e, &zj)| acc * zj.powu(e))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// A word over the alphabet `1..=d`. The empty word is allowed.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn strip_prefix(&self, prefix: &Word) -> Option<Word> {
        self.0
            .strip_prefix(prefix.0.as_slice())
            .map(|s| Word(s.to_vec()))
    }

    /// Exponent profile of the commutative collapse `z^w`.
    pub fn profile(&self, d: usize) -> MultiIndex {
        let mut v = vec![0u32; d];
        for &l in &self.0 {
            v[l as usize - 1] += 1;
        }
        MultiIndex(v)
    }
}

/// Length first, then lexicographic.
impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// All words of length at most `max_len`, in word order.
pub fn enumerate_words(d: usize, max_len: usize) -> Vec<Word> {
    let mut out = vec![Word::empty()];
    let mut layer = vec![Word::empty()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * d);
        for w in &layer {
            for l in 1..=d as u8 {
                let mut v = w.0.clone();
                v.push(l);
                next.push(Word(v));
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `|α|! / α!`, the number of words with exponent profile `α`.
pub fn multinomial(alpha: &MultiIndex) -> BigUint {
    let mut partial = 0u64;
    let mut acc = BigUint::one();
    for &a in alpha.entries() {
        partial += a as u64;
        acc *= binomial(partial, a as u64);
    }
    acc
}

/// Squared `H²_d` norm of `z^α`, equal to `α! / |α|!`.
pub fn monomial_weight(alpha: &MultiIndex) -> Ratio<BigUint> {
    Ratio::new(BigUint::one(), multinomial(alpha))
}

pub fn monomial_weight_f64(alpha: &MultiIndex) -> f64 {
    1.0 / multinomial(alpha).to_f64().unwrap_or(f64::INFINITY)
}

/// Every `α` with `|α| <= max_degree`, in graded lexicographic order.
pub fn enumerate_basis(d: usize, max_degree: usize) -> Vec<MultiIndex> {
    assert!(d >= 1, "dimension must be at least 1");
    let mut out = Vec::new();
    let mut current = vec![0u32; d];
    for n in 0..=max_degree as u32 {
        push_degree(&mut out, &mut current, 0, n);
    }
    out
}

fn push_degree(out: &mut Vec<MultiIndex>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        current[pos] = a;
        push_degree(out, current, pos + 1, remaining - a);
    }
}

/// Number of monomials of degree at most `n` in `d` variables.
pub fn basis_len(d: usize, n: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 1..=d as u128 {
        acc = acc * (n as u128 + i) / i;
    }
    acc as usize
}

/// Graded basis together with a reverse lookup and the monomial weights.
#[derive(Clone, Debug)]
pub struct Basis {
    pub d: usize,
    pub max_degree: usize,
    pub elems: Vec<MultiIndex>,
    pub weights: Vec<f64>,
    lookup: HashMap<MultiIndex, usize>,
}

impl Basis {
    pub fn new(d: usize, max_degree: usize) -> Self {
        let elems = enumerate_basis(d, max_degree);
        let weights = elems.iter().map(monomial_weight_f64).collect();
        let lookup = elems
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        Basis {
            d,
            max_degree,
            elems,
            weights,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// Number of basis elements of degree at most `n`.
    pub fn prefix_len(&self, n: usize) -> usize {
        basis_len(self.d, n.min(self.max_degree))
    }
}

/// Sparse polynomial `Σ c_α z^α` in `d` variables.
#[derive(Clone, PartialEq)]
pub struct Poly {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, Complex64>,
}

impl Poly {
    pub fn zero(d: usize) -> Self {
        Poly {
            dim: d,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(d: usize, c: Complex64) -> Self {
        let mut p = Poly::zero(d);
        p.set(MultiIndex::zero(d), c);
        p
    }

    pub fn monomial(alpha: MultiIndex, c: Complex64) -> Self {
        let mut p = Poly::zero(alpha.dim());
        p.set(alpha, c);
        p
    }

    /// `z_j` (zero-based `j`).
    pub fn coordinate(d: usize, j: usize) -> Self {
        Poly::monomial(MultiIndex::unit(d, j), Complex64::one())
    }

    /// Builds a polynomial from `(α, c)` pairs, summing duplicates.
    pub fn from_terms<I>(d: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, Complex64)>,
    {
        let mut p = Poly::zero(d);
        for (alpha, c) in terms {
            if alpha.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: alpha.len(),
                });
            }
            let key = MultiIndex(alpha);
            let v = p.coeff(&key) + c;
            p.set(key, v);
        }
        Ok(p)
    }

    /// One-variable polynomial from ascending real coefficients.
    pub fn univariate(coeffs: &[f64]) -> Self {
        let mut p = Poly::zero(1);
        for (n, &c) in coeffs.iter().enumerate() {
            p.set(MultiIndex(vec![n as u32]), Complex64::new(c, 0.0));
        }
        p
    }

    /// Reads coefficients laid out in the graded basis.
    pub fn from_basis_vector(basis: &Basis, v: &[Complex64]) -> Self {
        let mut p = Poly::zero(basis.d);
        for (alpha, &c) in basis.elems.iter().zip(v) {
            p.set(alpha.clone(), c);
        }
        p
    }

    /// Coefficients laid out in the graded basis; terms beyond the basis are dropped.
    pub fn to_basis_vector(&self, basis: &Basis) -> Vec<Complex64> {
        let mut v = vec![Complex64::zero(); basis.len()];
        for (alpha, &c) in &self.coeffs {
            if let Some(i) = basis.position(alpha) {
                v[i] = c;
            }
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.coeffs.keys().map(MultiIndex::degree).max()
    }

    pub fn degree_or_zero(&self) -> usize {
        self.degree().unwrap_or(0) as usize
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Complex64 {
        self.coeffs.get(alpha).copied().unwrap_or_default()
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeff(&MultiIndex::zero(self.dim))
    }

    pub fn set(&mut self, alpha: MultiIndex, c: Complex64) {
        assert_eq!(alpha.dim(), self.dim, "multi-index has the wrong length");
        if c == Complex64::zero() {
            self.coeffs.remove(&alpha);
        } else {
            self.coeffs.insert(alpha, c);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn is_constant(&self) -> bool {
        self.degree().is_none_or(|n| n == 0)
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (a, &c) in &self.coeffs {
            out.set(a.clone(), c * s);
        }
        out
    }

    pub fn conj_coeffs(&self) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (a, &c) in &self.coeffs {
            out.set(a.clone(), c.conj());
        }
        out
    }

    fn check_dim(&self, other: &Poly) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Poly) -> Result<Poly> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (a, &c) in &other.coeffs {
            let v = out.coeff(a) + c;
            out.set(a.clone(), v);
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Poly) -> Result<Poly> {
        self.checked_add(&other.scale(-Complex64::one()))
    }

    pub fn checked_mul(&self, other: &Poly) -> Result<Poly> {
        self.check_dim(other)?;
        let mut acc: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
        for (a, &ca) in &self.coeffs {
            for (b, &cb) in &other.coeffs {
                *acc.entry(a.plus(b)).or_default() += ca * cb;
            }
        }
        let mut out = Poly::zero(self.dim);
        for (k, v) in acc {
            out.set(k, v);
        }
        Ok(out)
    }

    /// `z_j · p` (zero-based `j`).
    pub fn shift(&self, j: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (a, &c) in &self.coeffs {
            out.set(a.bump(j), c);
        }
        out
    }

    /// Drops every term of degree above `n`.
    pub fn truncate(&self, n: u32) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (a, &c) in &self.coeffs {
            if a.degree() <= n {
                out.set(a.clone(), c);
            }
        }
        out
    }

    pub fn evaluate(&self, z: &[Complex64]) -> Result<Complex64> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(self.eval(z))
    }

    /// Unchecked evaluation; `z` must have length `d`.
    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.coeffs.iter().map(|(a, &c)| c * a.monomial(z)).sum()
    }

    /// Sum of absolute values of the coefficients.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// Largest coefficientwise difference to `other`.
    pub fn max_coeff_diff(&self, other: &Poly) -> f64 {
        let mut m: f64 = 0.0;
        for (a, &c) in &self.coeffs {
            m = m.max((c - other.coeff(a)).norm());
        }
        for (a, &c) in &other.coeffs {
            if !self.coeffs.contains_key(a) {
                m = m.max(c.norm());
            }
        }
        m
    }

    /// Removes coefficients with modulus at most `tol`.
    pub fn chop(&self, tol: f64) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (a, &c) in &self.coeffs {
            if c.norm() > tol {
                out.set(a.clone(), c);
            }
        }
        out
    }

    pub fn to_json_value(&self) -> PolyJson {
        PolyJson::from(self)
    }

    pub fn from_json_str(s: &str) -> Result<Poly> {
        let raw: PolyJson = serde_json::from_str(s)?;
        Poly::try_from(raw)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&PolyJson::from(self)).expect("poly serializes")
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (a, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)z^{:?}", c.re, c.im, a)?;
        }
        Ok(())
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        self.checked_add(rhs).expect("polynomial dimensions differ")
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self.checked_sub(rhs).expect("polynomial dimensions differ")
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        self.checked_mul(rhs).expect("polynomial dimensions differ")
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-Complex64::one())
    }
}

/// One coefficient entry of the polynomial JSON format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoeffJson {
    pub alpha: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

/// Wire form `{"d": int, "coeffs": [{"alpha": [...], "re": x, "im": y}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyJson {
    pub d: usize,
    pub coeffs: Vec<CoeffJson>,
}

impl From<&Poly> for PolyJson {
    fn from(p: &Poly) -> Self {
        PolyJson {
            d: p.dim,
            coeffs: p
                .coeffs
                .iter()
                .map(|(a, c)| CoeffJson {
                    alpha: a.0.clone(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

impl TryFrom<PolyJson> for Poly {
    type Error = Error;
    fn try_from(raw: PolyJson) -> Result<Poly> {
        if raw.d == 0 {
            return Err(Error::InvalidInput("d must be at least 1".into()));
        }
        for c in &raw.coeffs {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite coefficient at {:?}",
                    c.alpha
                )));
            }
        }
        Poly::from_terms(
            raw.d,
            raw.coeffs
                .into_iter()
                .map(|c| (c.alpha, Complex64::new(c.re, c.im))),
        )
    }
}
