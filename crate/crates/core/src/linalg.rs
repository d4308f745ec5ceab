//! Dense and banded complex linear algebra used by the operator models.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Symmetrizes `m` in place as `(m + mᴴ)/2`.
pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = c(m[(i, i)].re);
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(m: &CMat) -> Self {
        let n = m.nrows();
        if n == 0 {
            return HermitianEigen {
                values: Vec::new(),
                vectors: CMat::zeros(0, 0),
            };
        }
        let f = to_faer_hermitian(m);
        match f.self_adjoint_eigen(faer::Side::Lower) {
            Ok(eig) => {
                let s = eig.S();
                let u = eig.U();
                let values = (0..n).map(|i| s[i].re).collect();
                let vectors = CMat::from_fn(n, n, |i, j| u[(i, j)]);
                HermitianEigen { values, vectors }
            }
            Err(_) => {
                let mut h = m.clone();
                hermitize(&mut h);
                let eig = h.symmetric_eigen();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
                let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let mut vectors = CMat::zeros(n, n);
                for (k, &i) in order.iter().enumerate() {
                    vectors.set_column(k, &eig.eigenvectors.column(i));
                }
                HermitianEigen { values, vectors }
            }
        }
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Cholesky factor of a Hermitian positive definite matrix.
pub struct HermitianLlt {
    llt: faer::linalg::solvers::Llt<Complex64>,
}

impl HermitianLlt {
    /// `None` when the matrix is not numerically positive definite.
    pub fn new(m: &CMat) -> Option<Self> {
        to_faer_hermitian(m)
            .llt(faer::Side::Lower)
            .ok()
            .map(|llt| HermitianLlt { llt })
    }

    pub fn solve(&self, v: &CVec) -> CVec {
        use faer::linalg::solvers::Solve;
        let rhs = faer::Mat::from_fn(v.len(), 1, |i, _| v[i]);
        let x = self.llt.solve(&rhs);
        CVec::from_fn(v.len(), |i, _| x[(i, 0)])
    }
}

fn to_faer_hermitian(m: &CMat) -> faer::Mat<Complex64> {
    let n = m.nrows();
    faer::Mat::from_fn(n, n, |i, j| {
        if i == j {
            c(m[(i, i)].re)
        } else {
            (m[(i, j)] + m[(j, i)].conj()) * 0.5
        }
    })
}

/// Roots of `Σ c_k z^k` (ascending coefficients, nonzero leading term) as
/// eigenvalues of the companion matrix.
pub fn poly_roots(coeffs: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = coeffs.len().checked_sub(1)?;
    let lead = coeffs[n];
    if lead == Complex64::new(0.0, 0.0) {
        return None;
    }
    if n == 0 {
        return Some(Vec::new());
    }
    let comp = faer::Mat::<Complex64>::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -coeffs[i] / lead
        } else if i == j + 1 {
            c(1.0)
        } else {
            c(0.0)
        }
    });
    comp.eigenvalues().ok()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    match to_faer_hermitian(m).self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(v) => v,
        Err(_) => HermitianEigen::new(m).values,
    }
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let g = if m.nrows() >= m.ncols() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    hermitian_eigenvalues(&g)
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// Pseudo-inverse of a positive semidefinite Hermitian matrix with a relative
/// eigenvalue cutoff, together with a range test.
pub struct PsdPinv {
    /// Retained eigenvectors, one per column.
    pub basis: CMat,
    /// Retained eigenvalues.
    pub values: Vec<f64>,
    pub dropped: usize,
    pub lambda_max: f64,
}

impl PsdPinv {
    pub fn new(m: &CMat, rel_cutoff: f64) -> Self {
        Self::from_eigen(&HermitianEigen::new(m), rel_cutoff)
    }

    pub fn from_eigen(eig: &HermitianEigen, rel_cutoff: f64) -> Self {
        let lambda_max = eig.max().max(0.0);
        let cut = rel_cutoff * lambda_max;
        let keep: Vec<usize> = (0..eig.values.len())
            .filter(|&i| eig.values[i] > cut && eig.values[i] > 0.0)
            .collect();
        let n = eig.values.len();
        let mut basis = CMat::zeros(n, keep.len());
        for (k, &i) in keep.iter().enumerate() {
            basis.set_column(k, &eig.vectors.column(i));
        }
        PsdPinv {
            values: keep.iter().map(|&i| eig.values[i]).collect(),
            dropped: n - keep.len(),
            basis,
            lambda_max,
        }
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// Returns `vᴴ M⁺ v` and the relative norm of the component of `v`
    /// outside the retained eigenspace.
    pub fn quad_form(&self, v: &CVec) -> (f64, f64) {
        let coords = self.basis.adjoint() * v;
        let value = coords
            .iter()
            .zip(&self.values)
            .map(|(x, l)| x.norm_sqr() / l)
            .sum();
        let vn = v.norm();
        let residual = if vn == 0.0 {
            0.0
        } else {
            (v - &self.basis * &coords).norm() / vn
        };
        (value, residual)
    }

    pub fn matrix(&self) -> CMat {
        let mut scaled = self.basis.clone();
        for (k, l) in self.values.iter().enumerate() {
            let s = 1.0 / l;
            scaled.column_mut(k).scale_mut(s);
        }
        scaled * self.basis.adjoint()
    }
}

/// Schur complement of a banded Hermitian matrix onto its leading `keep`
/// indices, computed by eliminating indices from the last one downwards.
///
/// Only a sliding `(bw + 1)²` window is stored, so `n` may be large. Returns
/// `None` when a pivot falls below `pivot_tol` times the largest diagonal
/// entry seen, which happens when the matrix is singular.
pub fn banded_schur_tail<F>(
    n: usize,
    keep: usize,
    bw: usize,
    pivot_tol: f64,
    entry: F,
) -> Option<CMat>
where
    F: Fn(usize, usize) -> Complex64,
{
    assert!(keep <= n);
    let mut out = CMat::from_fn(keep, keep, |r, col| entry(r, col));
    if keep == n {
        return Some(out);
    }
    let w = bw + 1;
    // window slot for global index g is g % w
    let mut win = vec![Complex64::zero(); w * w];
    let at = |r: usize, col: usize| (r % w) * w + (col % w);
    let top = n - 1;
    let lo0 = top.saturating_sub(bw);
    for r in lo0..=top {
        for col in lo0..=top {
            win[at(r, col)] = entry(r, col);
        }
    }
    let mut diag_scale: f64 = (lo0..=top).map(|i| entry(i, i).norm()).fold(0.0, f64::max);
    let mut i = top;
    loop {
        let lo = i.saturating_sub(bw);
        let p = win[at(i, i)];
        diag_scale = diag_scale.max(entry(i, i).norm());
        if !(p.re > pivot_tol * diag_scale) || !p.re.is_finite() {
            return None;
        }
        let pinv = 1.0 / p;
        for r in lo..i {
            let f = win[at(r, i)] * pinv;
            if f == Complex64::zero() {
                continue;
            }
            for col in lo..i {
                let v = win[at(i, col)];
                if v != Complex64::zero() {
                    win[at(r, col)] -= f * v;
                }
            }
        }
        if i == keep {
            break;
        }
        i -= 1;
        // slide: bring in index i - bw with untouched entries
        if i >= bw {
            let g = i - bw;
            for col in g..=i {
                win[at(g, col)] = entry(g, col);
                win[at(col, g)] = entry(col, g);
            }
        }
    }
    let lo = keep.saturating_sub(bw);
    for r in lo..keep {
        for col in lo..keep {
            out[(r, col)] = win[at(r, col)];
        }
    }
    Some(out)
}

/// Minimizes `xᴴ H x` subject to `A x = r` through the KKT system, for a
/// fixed pair `(H, A)` and many right-hand sides.
pub struct KktSolver {
    n: usize,
    lu: Option<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
    pinv: Option<CMat>,
}

impl KktSolver {
    pub fn new(h: &CMat, a: &CMat) -> Result<Self> {
        let n = h.nrows();
        let m = a.nrows();
        if a.ncols() != n {
            return Err(Error::Numerical("KKT block sizes disagree".into()));
        }
        let mut k = CMat::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(h);
        k.view_mut((0, n), (n, m)).copy_from(&a.adjoint());
        k.view_mut((n, 0), (m, n)).copy_from(a);
        let scale = k.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let lu = k.clone().lu();
        let diag_min = (0..n + m)
            .map(|i| lu.u()[(i, i)].norm())
            .fold(f64::INFINITY, f64::min);
        if diag_min > 1e-11 * scale {
            return Ok(KktSolver {
                n,
                lu: Some(lu),
                pinv: None,
            });
        }
        let svd = k.svd(true, true);
        let pinv = svd
            .pseudo_inverse(1e-12 * scale)
            .map_err(|e| Error::Numerical(format!("KKT pseudo-inverse failed: {e}")))?;
        Ok(KktSolver {
            n,
            lu: None,
            pinv: Some(pinv),
        })
    }

    pub fn is_regular(&self) -> bool {
        self.lu.is_some()
    }

    pub fn solve(&self, r: &CVec) -> Result<CVec> {
        let mut rhs = CVec::zeros(self.n + r.len());
        rhs.rows_mut(self.n, r.len()).copy_from(r);
        let sol = match (&self.lu, &self.pinv) {
            (Some(lu), _) => lu
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("singular KKT system".into()))?,
            (None, Some(p)) => p * rhs,
            _ => unreachable!(),
        };
        Ok(sol.rows(0, self.n).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_schur_matches_dense() {
        let n = 12;
        let bw = 2;
        let entry = |r: usize, col: usize| {
            let d = r.abs_diff(col);
            if r == col {
                c(3.0 + r as f64 * 0.1)
            } else if d <= bw {
                let v = Complex64::new(0.3 / d as f64, 0.1 * (r as f64 - col as f64));
                v
            } else {
                Complex64::zero()
            }
        };
        let full = CMat::from_fn(n, n, entry);
        for keep in [1, 3, 5, 11, 12] {
            let s = banded_schur_tail(n, keep, bw, 1e-14, entry).unwrap();
            let inv = full.clone().try_inverse().unwrap();
            let lead = inv.view((0, 0), (keep, keep)).into_owned();
            let sinv = s.try_inverse().unwrap();
            assert!((sinv - lead).norm() < 1e-12, "keep={keep}");
        }
    }

    #[test]
    fn kkt_minimum_norm() {
        // minimize |x|² subject to x0 + x1 = 1
        let h = CMat::identity(2, 2);
        let a = CMat::from_row_slice(1, 2, &[c(1.0), c(1.0)]);
        let s = KktSolver::new(&h, &a).unwrap();
        let x = s.solve(&CVec::from_vec(vec![c(1.0)])).unwrap();
        assert!((x[0] - c(0.5)).norm() < 1e-14);
        assert!((x[1] - c(0.5)).norm() < 1e-14);
    }

    #[test]
    fn pinv_range_test() {
        let m = CMat::from_element(3, 3, c(1.0));
        let p = PsdPinv::new(&m, 1e-12);
        assert_eq!(p.rank(), 1);
        let (v, res) = p.quad_form(&CVec::from_element(3, c(1.0)));
        assert!((v - 1.0).abs() < 1e-12 && res < 1e-12);
        let (_, res) = p.quad_form(&CVec::from_vec(vec![c(1.0), c(0.0), c(0.0)]));
        assert!(res > 0.5);
    }
}
