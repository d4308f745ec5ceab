//! Finite sections of the Drury–Arveson space.
//!
//! Matrices are written in weighted-orthonormal coordinates: the coordinate
//! of `z^α` is its coefficient times `sqrt(w(α))`, where `w(α) = α!/|α|!` is
//! the squared norm of the monomial. Adjoints are then conjugate transposes.

use num_complex::Complex64;
use num_traits::Zero;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::index::{monomial_weight_f64, Basis, MultiIndex, Poly};
use crate::linalg::{min_eigenvalue, op_norm, CMat};

/// Polynomials of degree at most `n` with their monomial weights.
#[derive(Clone, Debug)]
pub struct TruncatedSpace {
    pub d: usize,
    pub n: usize,
    pub basis: Basis,
}

impl TruncatedSpace {
    pub fn new(d: usize, n: usize) -> Self {
        TruncatedSpace {
            d,
            n,
            basis: Basis::new(d, n),
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Orthonormal coordinates of `p`; terms above degree `n` are dropped.
    pub fn coords(&self, p: &Poly) -> Vec<Complex64> {
        let mut v = p.to_basis_vector(&self.basis);
        for (x, w) in v.iter_mut().zip(&self.basis.weights) {
            *x *= w.sqrt();
        }
        v
    }

    pub fn from_coords(&self, v: &[Complex64]) -> Poly {
        let scaled: Vec<Complex64> = v
            .iter()
            .zip(&self.basis.weights)
            .map(|(x, w)| x / w.sqrt())
            .collect();
        Poly::from_basis_vector(&self.basis, &scaled)
    }
}

fn same_dim(p: &Poly, q: &Poly) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(())
}

/// `⟨p, q⟩` in `H²_d`, linear in `p`.
pub fn h2_inner(p: &Poly, q: &Poly) -> Result<Complex64> {
    same_dim(p, q)?;
    let mut acc = Complex64::zero();
    for (alpha, &pa) in p.terms() {
        let qa = q.coeff(alpha);
        if qa != Complex64::zero() {
            acc += pa * qa.conj() * monomial_weight_f64(alpha);
        }
    }
    Ok(acc)
}

pub fn h2_norm_sq(p: &Poly) -> f64 {
    p.terms()
        .map(|(alpha, c)| c.norm_sqr() * monomial_weight_f64(alpha))
        .sum()
}

/// Exact `M_b* f` for polynomial `f`.
///
/// On monomials, `M_b* z^α = Σ_{γ ≤ α} conj(b_γ) w(α)/w(α-γ) z^{α-γ}`.
pub fn mult_adjoint_apply(b: &Poly, f: &Poly) -> Result<Poly> {
    same_dim(b, f)?;
    let mut out = Poly::zero(f.dim());
    for (alpha, &fa) in f.terms() {
        let wa = monomial_weight_f64(alpha);
        for (gamma, &bg) in b.terms() {
            if let Some(delta) = alpha.minus(gamma) {
                let wd = monomial_weight_f64(&delta);
                let v = out.coeff(&delta) + bg.conj() * fa * (wa / wd);
                out.set(delta, v);
            }
        }
    }
    Ok(out)
}

/// Matrix of `P_out M_b` restricted to the input section, in orthonormal
/// coordinates (rows: `out` basis, columns: `inp` basis).
pub fn mult_matrix(b: &Poly, inp: &Basis, out: &Basis) -> CMat {
    let mut m = CMat::zeros(out.len(), inp.len());
    for (j, beta) in inp.elems.iter().enumerate() {
        let wb = inp.weights[j];
        for (gamma, &bg) in b.terms() {
            let alpha = beta.plus(gamma);
            if let Some(i) = out.position(&alpha) {
                m[(i, j)] += bg * (out.weights[i] / wb).sqrt();
            }
        }
    }
    m
}

/// The Hermitian matrix `Q_N = I - M_b*M_b - M_a*M_a` compressed to degree `n`.
///
/// The entries are exact: `M_b` maps `P_n` into `P_{n + deg b}`, so the
/// compression of `M_b*M_b` equals `TᴴT` with `T` the rectangular section.
pub fn column_positivity_matrix(b: &Poly, a: &Poly, n: usize) -> Result<CMat> {
    same_dim(b, a)?;
    let d = b.dim();
    let inp = Basis::new(d, n);
    let extra = b.degree_or_zero().max(a.degree_or_zero());
    let out = Basis::new(d, n + extra);
    let tb = mult_matrix(b, &inp, &out);
    let ta = mult_matrix(a, &inp, &out);
    let q = CMat::identity(inp.len(), inp.len()) - tb.adjoint() * &tb - ta.adjoint() * &ta;
    Ok(q)
}

/// `λ_min(Q_N)`; non-negative values for every `N` are equivalent to
/// `M_a*M_a + M_b*M_b <= I`.
pub fn column_positivity(b: &Poly, a: &Poly, n: usize) -> Result<f64> {
    Ok(min_eigenvalue(&column_positivity_matrix(b, a, n)?))
}

/// Largest singular value of `M_b` from `P_n` into `P_{n + deg b}`, a lower
/// bound for the multiplier norm that is nondecreasing in `n`.
pub fn multiplier_norm_lower(b: &Poly, n: usize) -> f64 {
    let d = b.dim();
    let inp = Basis::new(d, n);
    let out = Basis::new(d, n + b.degree_or_zero());
    op_norm(&mult_matrix(b, &inp, &out))
}

/// Row-major CSV dump of a complex matrix; each entry is written as `re+imi`.
/// Row and column `k` correspond to the `k`-th element of the graded basis.
pub fn matrix_to_csv(m: &CMat, basis: Option<&Basis>) -> String {
    let mut s = String::new();
    if let Some(b) = basis {
        let header: Vec<String> = b.elems.iter().map(alpha_label).collect();
        let _ = writeln!(s, "#,{}", header.join(","));
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:e}{:+e}i", m[(i, j)].re, m[(i, j)].im))
            .collect();
        if let Some(b) = basis {
            let _ = write!(s, "{},", alpha_label(&b.elems[i]));
        }
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn alpha_label(a: &MultiIndex) -> String {
    a.entries()
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(":")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn inner_product_examples() {
        let z1 = Poly::coordinate(2, 0);
        let z1z2 = Poly::monomial(MultiIndex(vec![1, 1]), c(1.0));
        assert!((h2_inner(&z1, &z1).unwrap() - c(1.0)).norm() < 1e-15);
        assert!((h2_inner(&z1z2, &z1z2).unwrap() - c(0.5)).norm() < 1e-15);
        assert_eq!(h2_inner(&Poly::constant(2, c(1.0)), &z1).unwrap(), c(0.0));
        assert!(h2_inner(&z1, &Poly::coordinate(1, 0)).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let z1 = Poly::coordinate(2, 0);
        let r = mult_adjoint_apply(&z1, &z1).unwrap();
        assert_eq!(r, Poly::constant(2, c(1.0)));
        let b = Poly::from_terms(2, [(vec![0, 0], c(0.3)), (vec![1, 1], c(0.2))]).unwrap();
        let r = mult_adjoint_apply(&b, &Poly::constant(2, c(1.0))).unwrap();
        assert_eq!(r, Poly::constant(2, c(0.3)));
        assert!(mult_adjoint_apply(&Poly::zero(2), &z1).unwrap().is_zero());
    }

    #[test]
    fn positivity_examples() {
        let b = Poly::univariate(&[0.5, 0.5]);
        let a = Poly::univariate(&[0.5, -0.5]);
        assert!(column_positivity(&b, &a, 10).unwrap().abs() < 1e-10);
        let z = Poly::coordinate(1, 0);
        assert!((column_positivity(&z, &z, 6).unwrap() + 1.0).abs() < 1e-12);
        let cst = Poly::constant(2, c(0.6));
        let acst = Poly::constant(2, c(0.8));
        assert!(column_positivity(&cst, &acst, 3).unwrap().abs() < 1e-12);
    }

    #[test]
    fn norm_lower_examples() {
        let z = Poly::coordinate(1, 0);
        for n in [0, 3, 9] {
            assert!((multiplier_norm_lower(&z, n) - 1.0).abs() < 1e-12);
        }
        assert!((multiplier_norm_lower(&Poly::constant(2, c(0.4)), 4) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let m = CMat::identity(3, 3);
        let s = matrix_to_csv(&m, Some(&Basis::new(2, 1)));
        assert_eq!(s.lines().count(), 4);
        assert!(s.starts_with("#,0:0,1:0,0:1"));
    }
}
