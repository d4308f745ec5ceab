//! One-variable ground truth: the Szegő integral of `1 - |b|²`, the outer
//! function `a` with `|a|² + |b|² = 1` on the circle, and the Taylor
//! coefficient formula linking `a` to the backward shift on `H(b)`.
//!
//! On the circle `1 - |b(ζ)|² = ζ^{-n} Q(ζ)` for a polynomial `Q` of degree
//! `2n`. Its unimodular roots are split off exactly, and only the smooth
//! remainder goes through the FFT cepstrum.

use std::sync::Arc;

use num_complex::Complex64;
use num_traits::Zero;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dbr::HbContext;
use crate::error::{Error, Result};
use crate::gleason::{solve_min_defect, GleasonOperators};
use crate::index::Poly;
use crate::linalg::poly_roots;

pub const DEFAULT_GRID: usize = 4096;
/// `1 - |b|²` below this everywhere on the grid counts as identically zero.
pub const UNDERFLOW_TOL: f64 = 1e-14;
/// Szegő integrals below `-SZEGO_CAP` are reported as `-∞`.
pub const SZEGO_CAP: f64 = 50.0;

const CIRCLE_TOL: f64 = 1e-3;

/// Values of `|b|²` at the `m`-th roots of unity.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleGrid {
    pub m: usize,
    pub values: Vec<f64>,
}

fn check_univariate(b: &Poly) -> Result<()> {
    if b.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: b.dim(),
        });
    }
    Ok(())
}

fn check_grid(m: usize, b: &Poly) -> Result<()> {
    if !m.is_power_of_two() || m < 8 * (b.degree_or_zero() + 1) {
        return Err(Error::InvalidInput(format!(
            "grid size {m} must be a power of two and at least 8 (deg b + 1)"
        )));
    }
    Ok(())
}

fn grid_point(k: usize, m: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m as f64)
}

impl CircleGrid {
    pub fn new(b: &Poly, m: usize) -> Result<Self> {
        check_univariate(b)?;
        check_grid(m, b)?;
        let values: Vec<f64> = (0..m)
            .map(|k| b.eval(&[grid_point(k, m)]).norm_sqr())
            .collect();
        if let Some(v) = values.iter().copied().find(|&v| v > 1.0 + 1e-12) {
            return Err(Error::NotContractive(format!("|b|² = {v} on the circle")));
        }
        Ok(CircleGrid { m, values })
    }

    /// `1 - |b|²` on the grid vanishes to rounding everywhere.
    pub fn is_extreme(&self) -> bool {
        self.values.iter().all(|v| 1.0 - v <= UNDERFLOW_TOL)
    }
}

/// A zero of `1 - |b|²` on the circle, where `a` vanishes to order `order`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryZero {
    pub point: Complex64,
    pub order: usize,
}

struct Factored {
    zeros: Vec<BoundaryZero>,
    /// `1 - |b|²` with the boundary zeros divided out, on the grid.
    smooth: Vec<f64>,
}

/// Coefficients of `Q(ζ) = ζ^n (1 - b(ζ) conj(b(ζ)))`, `n = deg b`.
fn q_coeffs(b: &Poly, n: usize) -> Vec<Complex64> {
    let bc: Vec<Complex64> = (0..=n)
        .map(|k| b.coeff(&crate::index::MultiIndex(vec![k as u32])))
        .collect();
    let mut q = vec![Complex64::zero(); 2 * n + 1];
    q[n] += 1.0;
    for (k, bk) in bc.iter().enumerate() {
        for (l, bl) in bc.iter().enumerate() {
            q[k + n - l] -= bk * bl.conj();
        }
    }
    q
}

fn deflate(p: &[Complex64], root: Complex64) -> Vec<Complex64> {
    let n = p.len() - 1;
    let mut out = vec![Complex64::zero(); n];
    let mut acc = Complex64::zero();
    for k in (1..=n).rev() {
        acc = p[k] + acc * root;
        out[k - 1] = acc;
    }
    out
}

fn cluster_boundary_roots(roots: &[Complex64]) -> Vec<BoundaryZero> {
    let mut near: Vec<Complex64> = roots
        .iter()
        .copied()
        .filter(|r| (r.norm() - 1.0).abs() < CIRCLE_TOL)
        .collect();
    near.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    for r in near {
        match groups.iter_mut().find(|g| (g[0] - r).norm() < CIRCLE_TOL) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    groups
        .into_iter()
        .filter(|g| g.len() >= 2)
        .map(|g| {
            let mean: Complex64 = g.iter().sum::<Complex64>() / g.len() as f64;
            BoundaryZero {
                point: mean / mean.norm(),
                order: g.len() / 2,
            }
        })
        .collect()
}

fn factor(b: &Poly, grid: &CircleGrid) -> Result<Factored> {
    let n = b.degree_or_zero();
    let mut q = q_coeffs(b, n);
    let scale = q.iter().map(|c| c.norm()).fold(0.0, f64::max);
    // roots at the origin only shift the phase
    let mut low = 0;
    while low < q.len() && q[low].norm() <= 1e-15 * scale {
        low += 1;
    }
    while q.len() > low + 1 && q.last().is_some_and(|c| c.norm() <= 1e-15 * scale) {
        q.pop();
    }
    let q = q[low..].to_vec();
    let roots =
        poly_roots(&q).ok_or_else(|| Error::Numerical("companion eigenvalues failed".into()))?;
    let zeros = cluster_boundary_roots(&roots);
    let mut r = q;
    let mut unit = Complex64::new(1.0, 0.0);
    let mut removed = 0;
    for z in &zeros {
        for _ in 0..2 * z.order {
            r = deflate(&r, z.point);
        }
        unit *= (-z.point.conj()).powu(z.order as u32);
        removed += z.order;
    }
    let shift = n as i64 - low as i64 - removed as i64;
    let m = grid.m;
    let mut smooth = Vec::with_capacity(m);
    for k in 0..m {
        let w = grid_point(k, m);
        let mut acc = Complex64::zero();
        for c in r.iter().rev() {
            acc = acc * w + c;
        }
        let v = acc * w.powi(-shift as i32) / unit;
        if v.re <= 0.0 {
            return Err(Error::Numerical(format!(
                "smooth factor of 1 - |b|² is {:e} at grid point {k}",
                v.re
            )));
        }
        smooth.push(v.re);
    }
    Ok(Factored { zeros, smooth })
}

fn fft_pair(m: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
}

/// `∫_𝕋 log(1 - |b|²) dm` on an `m`-point grid; `-∞` for extreme data.
pub fn szego_integral(b: &Poly, m: usize) -> Result<f64> {
    let grid = CircleGrid::new(b, m)?;
    if grid.is_extreme() {
        return Ok(f64::NEG_INFINITY);
    }
    let f = factor(b, &grid)?;
    let v = f.smooth.iter().map(|x| x.ln()).sum::<f64>() / m as f64;
    Ok(if v < -SZEGO_CAP { f64::NEG_INFINITY } else { v })
}

/// Boundary zeros of `1 - |b|²` and the order to which `a` vanishes there.
pub fn boundary_zeros(b: &Poly, m: usize) -> Result<Vec<BoundaryZero>> {
    let grid = CircleGrid::new(b, m)?;
    if grid.is_extreme() {
        return Err(Error::QuasiExtreme(
            "1 - |b|² vanishes on the circle".into(),
        ));
    }
    Ok(factor(b, &grid)?.zeros)
}

/// Taylor coefficients through degree `m/4` of the outer function `a` with
/// `|a|² + |b|² = 1` on the circle and `a(0) > 0`.
pub fn outer_a(b: &Poly, m: usize) -> Result<Poly> {
    let grid = CircleGrid::new(b, m)?;
    if grid.is_extreme() {
        return Err(Error::QuasiExtreme(
            "1 - |b|² vanishes on the circle".into(),
        ));
    }
    let f = factor(b, &grid)?;
    let mean_log = f.smooth.iter().map(|x| x.ln()).sum::<f64>() / m as f64;
    if mean_log < -SZEGO_CAP {
        return Err(Error::QuasiExtreme(format!(
            "Szegő integral {mean_log} is below the cap"
        )));
    }
    let (fwd, inv) = fft_pair(m);
    let mut buf: Vec<Complex64> = f
        .smooth
        .iter()
        .map(|x| Complex64::new(x.ln(), 0.0))
        .collect();
    fwd.process(&mut buf);
    let scale = 1.0 / m as f64;
    // analytic completion of ½ log q: half the mean, the positive frequencies in full
    let mut h = vec![Complex64::zero(); m];
    h[0] = buf[0] * (0.5 * scale);
    for k in 1..m / 2 {
        h[k] = buf[k] * scale;
    }
    inv.process(&mut h);
    let mut e: Vec<Complex64> = h.iter().map(|v| v.exp()).collect();
    fwd.process(&mut e);
    let keep = m / 4;
    let mut coeffs: Vec<Complex64> = e[..=keep].iter().map(|v| v * scale).collect();
    coeffs[0] = Complex64::new(coeffs[0].re, 0.0);
    for z in &f.zeros {
        for _ in 0..z.order {
            // multiply by 1 - conj(ζ) z
            for k in (1..=keep).rev() {
                coeffs[k] = coeffs[k] - z.point.conj() * coeffs[k - 1];
            }
        }
    }
    let basis = crate::index::Basis::new(1, keep);
    Ok(Poly::from_basis_vector(&basis, &coeffs).chop(1e-15))
}

/// One row of the coefficient check at `n ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarasonRow {
    pub n: usize,
    /// `⟨X^n b, b⟩_b`
    pub inner: Complex64,
    /// `-â(n)/a(0)`
    pub oracle: Complex64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarasonTable {
    /// `a(0)²` from the outer function.
    pub a0_sq: f64,
    /// `1/(1 + ‖b‖²_b)` from the Gram estimate.
    pub a0_sq_hb: f64,
    pub a0_residual: f64,
    pub rows: Vec<SarasonRow>,
}

impl SarasonTable {
    pub fn max_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.residual)
            .fold(self.a0_residual, f64::max)
    }
}

/// Compares `⟨X^n b, b⟩_b` with `-â(n)/a(0)` for `1 ≤ n ≤ n_max`, and `a(0)²`
/// with `1/(1 + ‖b‖²_b)`.
pub fn sarason_coeff_check(ctx: &HbContext, n_max: usize) -> Result<SarasonTable> {
    check_univariate(&ctx.b)?;
    let b = &ctx.b;
    let a = outer_a(b, DEFAULT_GRID)?;
    let a0 = a.constant_term().re;
    let b_norm = ctx.gram.norm_sq(b)?;
    if !b_norm.is_finite() {
        return Err(Error::QuasiExtreme("b is not in H(b)".into()));
    }
    let a0_sq_hb = 1.0 / (1.0 + b_norm);
    let coeff = |k: usize| a.coeff(&crate::index::MultiIndex(vec![k as u32]));
    let mut rows = Vec::with_capacity(n_max);
    if b.is_constant() {
        for n in 1..=n_max {
            let oracle = -coeff(n) / a0;
            rows.push(SarasonRow {
                n,
                inner: Complex64::zero(),
                oracle,
                residual: oracle.norm(),
            });
        }
    } else {
        let tuple = solve_min_defect(ctx)?;
        let ops = GleasonOperators::new(ctx, &tuple)?;
        let mut xb = b.clone();
        for n in 1..=n_max {
            xb = ops.apply_x(0, &xb);
            let inner = ops.inner(&xb, b);
            let oracle = -coeff(n) / a0;
            rows.push(SarasonRow {
                n,
                inner,
                oracle,
                residual: (inner - oracle).norm(),
            });
        }
    }
    Ok(SarasonTable {
        a0_sq: a0 * a0,
        a0_sq_hb,
        a0_residual: (a0 * a0 - a0_sq_hb).abs(),
        rows,
    })
}
