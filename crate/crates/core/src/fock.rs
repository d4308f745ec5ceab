//! Truncated full Fock space over `ℂ^d`: left creation operators, elements of
//! the free Toeplitz algebra given by their word coefficients, the
//! commutative collapse onto polynomials, and the minimal-word shift.
//!
//! An element `F` with coefficients `f_w` acts by `F ξ_u = Σ_w f_w ξ_{wu}`.
//! Matrices are taken on words of length at most `L` with the full image
//! kept, so `FᴴF` is compressed exactly.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{enumerate_words, MultiIndex, Poly, Word};
use crate::linalg::{min_eigenvalue, op_norm, CMat};

/// Words of length at most `max_len` with positions.
#[derive(Clone, Debug)]
pub struct FockBasis {
    pub d: usize,
    pub max_len: usize,
    pub words: Vec<Word>,
    lookup: HashMap<Word, usize>,
}

impl FockBasis {
    pub fn new(d: usize, max_len: usize) -> Self {
        let words = enumerate_words(d, max_len);
        let lookup = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        FockBasis {
            d,
            max_len,
            words,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn position(&self, w: &Word) -> Option<usize> {
        self.lookup.get(w).copied()
    }
}

/// Word coefficients `f_w`, `|w| ≤ L`, of an element of the free algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct FockCoeffs {
    pub d: usize,
    pub l: usize,
    pub coeffs: BTreeMap<Word, Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordCoeffJson {
    pub word: Vec<u8>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockCoeffsJson {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub coeffs: Vec<WordCoeffJson>,
}

impl FockCoeffs {
    pub fn zero(d: usize, l: usize) -> Self {
        FockCoeffs {
            d,
            l,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn from_terms(
        d: usize,
        l: usize,
        terms: impl IntoIterator<Item = (Vec<u8>, Complex64)>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("d must be positive".into()));
        }
        let mut out = FockCoeffs::zero(d, l);
        for (w, v) in terms {
            if w.iter().any(|&x| x == 0 || x as usize > d) {
                return Err(Error::InvalidInput(format!(
                    "word {w:?} has letters outside 1..={d}"
                )));
            }
            if w.len() > l {
                return Err(Error::InvalidInput(format!(
                    "word {w:?} is longer than L = {l}"
                )));
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::InvalidInput("non-finite coefficient".into()));
            }
            let e = out.coeffs.entry(Word(w)).or_insert_with(Complex64::zero);
            *e += v;
        }
        out.coeffs.retain(|_, v| *v != Complex64::zero());
        Ok(out)
    }

    /// The element `L_i`.
    pub fn creation(d: usize, i: usize, l: usize) -> Result<Self> {
        Self::from_terms(d, l.max(1), [(vec![i as u8], Complex64::new(1.0, 0.0))])
    }

    pub fn coeff(&self, w: &Word) -> Complex64 {
        self.coeffs.get(w).copied().unwrap_or_else(Complex64::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Length of the longest word with a nonzero coefficient.
    pub fn max_word_len(&self) -> usize {
        self.coeffs.keys().map(Word::len).max().unwrap_or(0)
    }

    /// Sum of coefficient moduli, an upper bound for the operator norm.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|v| v.norm()).sum()
    }

    pub fn to_json(&self) -> FockCoeffsJson {
        FockCoeffsJson {
            d: self.d,
            l: self.l,
            coeffs: self
                .coeffs
                .iter()
                .map(|(w, v)| WordCoeffJson {
                    word: w.0.clone(),
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
    }

    pub fn from_json(j: &FockCoeffsJson) -> Result<Self> {
        Self::from_terms(
            j.d,
            j.l,
            j.coeffs
                .iter()
                .map(|c| (c.word.clone(), Complex64::new(c.re, c.im))),
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("serializable")
    }
}

fn same_dim(a: &FockCoeffs, b: &FockCoeffs) -> Result<()> {
    if a.d != b.d {
        return Err(Error::DimensionMismatch {
            expected: a.d,
            found: b.d,
        });
    }
    Ok(())
}

/// Matrix of `L_i` on words of length at most `l`; words of length `l` are
/// sent to zero.
pub fn left_creation_matrix(d: usize, i: usize, l: usize) -> Result<CMat> {
    if i == 0 || i > d {
        return Err(Error::InvalidInput(format!("letter {i} outside 1..={d}")));
    }
    let basis = FockBasis::new(d, l);
    let mut m = CMat::zeros(basis.len(), basis.len());
    let letter = Word(vec![i as u8]);
    for (k, w) in basis.words.iter().enumerate() {
        if w.len() < l {
            let r = basis
                .position(&letter.concat(w))
                .expect("shorter word extends");
            m[(r, k)] = Complex64::new(1.0, 0.0);
        }
    }
    Ok(m)
}

/// `F` restricted to words of length at most `l`, with rows on words up to
/// `l + max_word_len(F)`.
pub fn operator_matrix(f: &FockCoeffs, l: usize) -> CMat {
    let inp = FockBasis::new(f.d, l);
    let out = FockBasis::new(f.d, l + f.max_word_len());
    let mut m = CMat::zeros(out.len(), inp.len());
    for (k, u) in inp.words.iter().enumerate() {
        for (w, v) in &f.coeffs {
            let r = out.position(&w.concat(u)).expect("within output length");
            m[(r, k)] += *v;
        }
    }
    m
}

/// Commutative collapse `Σ f_w z^w`.
pub fn symmetrize(f: &FockCoeffs) -> Poly {
    let mut acc: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
    for (w, v) in &f.coeffs {
        *acc.entry(w.profile(f.d)).or_insert_with(Complex64::zero) += *v;
    }
    let mut p = Poly::zero(f.d);
    for (a, v) in acc {
        p.set(a, v);
    }
    p
}

/// Number of words with exponent profile `α`.
fn word_count(alpha: &MultiIndex) -> f64 {
    crate::index::multinomial(alpha)
        .to_f64()
        .unwrap_or(f64::INFINITY)
}

/// The evaluation `p(L)` with `z^α ↦ L_1^{α_1} ⋯ L_d^{α_d}`; its collapse is
/// `p` exactly.
pub fn evaluation_lift(p: &Poly, l: usize) -> Result<FockCoeffs> {
    let d = p.dim();
    if p.degree_or_zero() > l {
        return Err(Error::InvalidInput(format!(
            "degree {} exceeds L = {l}",
            p.degree_or_zero()
        )));
    }
    let terms = p.terms().map(|(alpha, c)| {
        let w: Vec<u8> = alpha
            .entries()
            .iter()
            .enumerate()
            .flat_map(|(j, &e)| std::iter::repeat_n(j as u8 + 1, e as usize))
            .collect();
        (w, *c)
    });
    FockCoeffs::from_terms(d, l, terms)
}

/// Lift of `p` spreading each coefficient evenly over the words of its
/// profile, so that `symmetrize(symmetric_lift(p)) = p`.
pub fn symmetric_lift(p: &Poly, l: usize) -> Result<FockCoeffs> {
    let d = p.dim();
    if p.degree_or_zero() > l {
        return Err(Error::InvalidInput(format!(
            "degree {} exceeds L = {l}",
            p.degree_or_zero()
        )));
    }
    let mut terms = Vec::new();
    for w in enumerate_words(d, p.degree_or_zero()) {
        let alpha = w.profile(d);
        let c = p.coeff(&alpha);
        if c != Complex64::zero() {
            terms.push((w.0, c / word_count(&alpha)));
        }
    }
    FockCoeffs::from_terms(d, l, terms)
}

/// The minimal word `v` (length, then lexicographic) with `c_v ≠ 0`, and
/// `Ã = L_v* A`, whose coefficients are `c̃_u = c_{vu}`.
pub fn shift_nonvanishing(a: &FockCoeffs) -> Result<(Word, FockCoeffs)> {
    let (v, _) = a
        .coeffs
        .iter()
        .next()
        .ok_or(Error::ZeroInput("A has no nonzero coefficient"))?;
    let v = v.clone();
    let mut out = FockCoeffs::zero(a.d, a.l - v.len());
    for (w, c) in &a.coeffs {
        if let Some(u) = w.strip_prefix(&v) {
            out.coeffs.insert(u, *c);
        }
    }
    Ok((v, out))
}

/// `λ_min(I - BᴴB - AᴴA)` on words of length at most `l`. Nonnegativity is
/// necessary for `[B; A]` to be a contractive column.
pub fn column_contractivity_fock(b: &FockCoeffs, a: &FockCoeffs, l: usize) -> Result<f64> {
    same_dim(a, b)?;
    let mb = operator_matrix(b, l);
    let ma = operator_matrix(a, l);
    let n = mb.ncols();
    let q = CMat::identity(n, n) - mb.adjoint() * &mb - ma.adjoint() * &ma;
    Ok(min_eigenvalue(&q))
}

/// Operator norm of `F` restricted to words of length at most `l`, a lower
/// bound for `‖F‖`.
pub fn truncated_norm(f: &FockCoeffs, l: usize) -> f64 {
    op_norm(&operator_matrix(f, l))
}

/// Seeded pair `(B, A)` with `(Σ|b_w|)² + (Σ|a_w|)² ≤ 1`, hence a contractive
/// column, where `A` has no constant term. Both use `terms` random words of
/// length at most `l`.
pub fn random_column_pair(
    d: usize,
    l: usize,
    terms: usize,
    seed: u64,
) -> Result<(FockCoeffs, FockCoeffs)> {
    if l == 0 || terms == 0 {
        return Err(Error::InvalidInput(
            "need L ≥ 1 and at least one term".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let word = |rng: &mut ChaCha20Rng, min_len: usize| {
        let len = rng.random_range(min_len..=l);
        (0..len)
            .map(|_| rng.random_range(1..=d as u8))
            .collect::<Vec<u8>>()
    };
    let draw = |rng: &mut ChaCha20Rng, min_len: usize| {
        (0..terms)
            .map(|_| {
                let w = word(rng, min_len);
                let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                (w, v)
            })
            .collect::<Vec<_>>()
    };
    let bt = draw(&mut rng, 0);
    let at = draw(&mut rng, 1);
    let mut b = FockCoeffs::from_terms(d, l, bt)?;
    let mut a = FockCoeffs::from_terms(d, l, at)?;
    let share: f64 = rng.random_range(0.1..0.9);
    let slack: f64 = rng.random_range(0.5..1.0);
    let (nb, na) = (b.l1_norm(), a.l1_norm());
    let sb = slack * share.sqrt() / nb.max(f64::MIN_POSITIVE);
    let sa = slack * (1.0 - share).sqrt() / na.max(f64::MIN_POSITIVE);
    for v in b.coeffs.values_mut() {
        *v *= sb;
    }
    for v in a.coeffs.values_mut() {
        *v *= sa;
    }
    Ok((b, a))
}

/// Outcome of the minimal-word shift on a column `[B; A]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftOutcome {
    pub v: Word,
    pub a_shifted: FockCoeffs,
    pub symmetrized: Poly,
    /// `λ(Ã)(0) = c_v`.
    pub value_at_zero: Complex64,
    pub min_eig_before: f64,
    pub min_eig_after: f64,
    pub length_before: usize,
    pub length_after: usize,
}

/// Shift, symmetrization and the contractivity check before (length `l`)
/// and after (length `l - |v|`).
pub fn fock_shift(b: &FockCoeffs, a: &FockCoeffs, l: usize) -> Result<ShiftOutcome> {
    same_dim(a, b)?;
    let (v, at) = shift_nonvanishing(a)?;
    if v.len() > l {
        return Err(Error::InvalidInput(format!(
            "minimal word has length {} above the truncation {l}",
            v.len()
        )));
    }
    let symmetrized = symmetrize(&at);
    let value_at_zero = symmetrized.constant_term();
    let before = column_contractivity_fock(b, a, l)?;
    let after = column_contractivity_fock(b, &at, l - v.len())?;
    Ok(ShiftOutcome {
        v: v.clone(),
        a_shifted: at,
        symmetrized,
        value_at_zero,
        min_eig_before: before,
        min_eig_after: after,
        length_before: l,
        length_after: l - v.len(),
    })
}
