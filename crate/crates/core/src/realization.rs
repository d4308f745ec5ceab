//! Colligations and their transfer functions.
//!
//! A colligation on a state space of dimension `m` is the block operator
//! `U = [A; C | B; D]` from `ℂ^m ⊕ ℂ` to `(ℂ^k)^d ⊕ ℂ^p`, where all
//! coordinates are orthonormal. When `k = m` its transfer function is
//! `S(z) = D + C (I - Σ z_j A_j)^{-1} Σ z_j B_j`. The isometric extension
//! `Ũ` lands in a larger space (`k > m`) and is only used as a block.

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dbr::{qe_verdict, HbContext, Schedule, ScoreTrace, Verdict, VerdictEvidence};
use crate::error::{Error, Result};
use crate::gleason::{solve_min_defect, GleasonOperators, GleasonTuple};
use crate::hardy::column_positivity;
use crate::index::{basis_len, monomial_weight_f64, Basis, Poly};
use crate::linalg::{op_norm, CMat, CVec};

#[derive(Clone, Debug, PartialEq)]
pub struct Colligation {
    pub d: usize,
    pub a: Vec<CMat>,
    pub b: Vec<CVec>,
    /// `p × m`
    pub c: CMat,
    /// length `p`
    pub dd: CVec,
}

/// Dense matrix, row-major, entries as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMat> for MatJson {
    fn from(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        MatJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<&MatJson> for CMat {
    type Error = Error;

    fn try_from(j: &MatJson) -> Result<CMat> {
        if j.data.len() != j.rows * j.cols {
            return Err(Error::InvalidInput(
                "matrix data length differs from rows × cols".into(),
            ));
        }
        Ok(CMat::from_row_iterator(
            j.rows,
            j.cols,
            j.data.iter().map(|[re, im]| Complex64::new(*re, *im)),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColligationJson {
    pub d: usize,
    pub state_dim: usize,
    pub outputs: usize,
    #[serde(rename = "A")]
    pub a: Vec<MatJson>,
    #[serde(rename = "B")]
    pub b: Vec<MatJson>,
    #[serde(rename = "C")]
    pub c: MatJson,
    #[serde(rename = "D")]
    pub dd: MatJson,
}

fn col(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

impl Colligation {
    pub fn new(a: Vec<CMat>, b: Vec<CVec>, c: CMat, dd: CVec) -> Result<Self> {
        let d = a.len();
        let m = c.ncols();
        if d == 0 || b.len() != d {
            return Err(Error::InvalidInput(
                "need one A and one B per variable".into(),
            ));
        }
        let k = a[0].nrows();
        if a.iter().any(|x| x.nrows() != k || x.ncols() != m) || b.iter().any(|x| x.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: a[0].ncols(),
            });
        }
        if dd.len() != c.nrows() {
            return Err(Error::DimensionMismatch {
                expected: c.nrows(),
                found: dd.len(),
            });
        }
        Ok(Colligation { d, a, b, c, dd })
    }

    /// State dimension `m`.
    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    /// Dimension `k` of the space the `A_j` map into.
    pub fn image_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn is_square(&self) -> bool {
        self.image_dim() == self.state_dim()
    }

    /// Output dimension `p`.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// The block matrix `U`.
    pub fn block(&self) -> CMat {
        let m = self.state_dim();
        let k = self.image_dim();
        let p = self.outputs();
        let mut u = CMat::zeros(self.d * k + p, m + 1);
        for j in 0..self.d {
            u.view_mut((j * k, 0), (k, m)).copy_from(&self.a[j]);
            u.view_mut((j * k, m), (k, 1)).copy_from(&col(&self.b[j]));
        }
        u.view_mut((self.d * k, 0), (p, m)).copy_from(&self.c);
        u.view_mut((self.d * k, m), (p, 1))
            .copy_from(&col(&self.dd));
        u
    }

    pub fn to_json(&self) -> ColligationJson {
        ColligationJson {
            d: self.d,
            state_dim: self.state_dim(),
            outputs: self.outputs(),
            a: self.a.iter().map(MatJson::from).collect(),
            b: self.b.iter().map(|v| MatJson::from(&col(v))).collect(),
            c: MatJson::from(&self.c),
            dd: MatJson::from(&col(&self.dd)),
        }
    }

    pub fn from_json(j: &ColligationJson) -> Result<Self> {
        let a = j.a.iter().map(CMat::try_from).collect::<Result<Vec<_>>>()?;
        let b =
            j.b.iter()
                .map(|m| CMat::try_from(m).map(|m| CVec::from_column_slice(m.as_slice())))
                .collect::<Result<Vec<_>>>()?;
        let c = CMat::try_from(&j.c)?;
        let dd = CVec::from_column_slice(CMat::try_from(&j.dd)?.as_slice());
        let out = Colligation::new(a, b, c, dd)?;
        if out.d != j.d || out.state_dim() != j.state_dim || out.outputs() != j.outputs {
            return Err(Error::InvalidInput(
                "colligation header disagrees with its blocks".into(),
            ));
        }
        Ok(out)
    }
}

/// `S(z)`, one entry per output row.
pub fn transfer_eval(col: &Colligation, z: &[Complex64]) -> Result<CVec> {
    if z.len() != col.d {
        return Err(Error::DimensionMismatch {
            expected: col.d,
            found: z.len(),
        });
    }
    if !col.is_square() {
        return Err(Error::InvalidInput(
            "transfer function needs A_j acting on the state space".into(),
        ));
    }
    let r2: f64 = z.iter().map(|x| x.norm_sqr()).sum();
    if r2 >= 1.0 {
        return Err(Error::OutsideBall(format!("|z|² = {r2}")));
    }
    let m = col.state_dim();
    if m == 0 {
        return Ok(col.dd.clone());
    }
    let mut lhs = CMat::identity(m, m);
    let mut rhs = CVec::zeros(m);
    for j in 0..col.d {
        lhs -= &col.a[j] * z[j];
        rhs += &col.b[j] * z[j];
    }
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotContractive("I - zA is singular".into()))?;
    Ok(&col.dd + &col.c * x)
}

/// Taylor coefficients of the transfer function through degree `n`, one
/// polynomial per output row.
///
/// The state vector attached to `z^α` obeys `x_{e_j} = B_j` and
/// `x_α = Σ_j A_j x_{α - e_j}`. A contractive transfer function has
/// `‖S e‖_{H²} ≤ 1`; the running sum of squared coefficient norms is
/// monitored and exceeding `1 + 1e-6` is reported as divergence.
pub fn transfer_taylor(col: &Colligation, n: usize) -> Result<Vec<Poly>> {
    if !col.is_square() {
        return Err(Error::InvalidInput(
            "transfer function needs A_j acting on the state space".into(),
        ));
    }
    let d = col.d;
    let p = col.outputs();
    let m = col.state_dim();
    let basis = Basis::new(d, n);
    let mut states: Vec<CVec> = Vec::with_capacity(basis.len());
    let mut coeffs = vec![vec![Complex64::zero(); basis.len()]; p];
    let mut energy = vec![0.0; p];
    for (k, alpha) in basis.elems.iter().enumerate() {
        let x = match alpha.degree() {
            0 => CVec::zeros(m),
            1 => {
                let j = alpha
                    .entries()
                    .iter()
                    .position(|&e| e == 1)
                    .expect("unit index");
                col.b[j].clone()
            }
            _ => {
                let mut acc = CVec::zeros(m);
                for j in 0..d {
                    if let Some(prev) = alpha.minus(&crate::index::MultiIndex::unit(d, j)) {
                        let i = basis.position(&prev).expect("lower index");
                        acc += &col.a[j] * &states[i];
                    }
                }
                acc
            }
        };
        let out = if alpha.degree() == 0 {
            col.dd.clone()
        } else {
            &col.c * &x
        };
        let w = monomial_weight_f64(alpha);
        for r in 0..p {
            coeffs[r][k] = out[r];
            energy[r] += out[r].norm_sqr() * w;
        }
        if energy.iter().any(|&e| e > 1.0 + 1e-6) {
            return Err(Error::Numerical(format!(
                "Taylor coefficients of the transfer function stop decaying at degree {}",
                alpha.degree()
            )));
        }
        states.push(x);
    }
    Ok(coeffs
        .iter()
        .map(|c| Poly::from_basis_vector(&basis, c))
        .collect())
}

/// `‖UᴴU - I‖₂`.
pub fn isometry_residual(col: &Colligation) -> f64 {
    let u = col.block();
    let g = u.adjoint() * &u - CMat::identity(u.ncols(), u.ncols());
    op_norm(&g)
}

/// The functional model `A_j = X_j`, `B_j = b_j`, `C f = f(0)`, `D = b(0)`.
pub fn functional_model_colligation(ops: &GleasonOperators) -> Result<Colligation> {
    let c0 = ops.phi.rows(0, 1).into_owned();
    Colligation::new(
        ops.x_model.clone(),
        ops.b_j_model.clone(),
        c0,
        CVec::from_element(1, ops.b.constant_term()),
    )
}

/// The colligations `V` (transfer function `a`) and `Ũ` (outputs `b` and `a`).
#[derive(Clone, Debug, PartialEq)]
pub struct AColligations {
    pub a0: f64,
    pub v: Colligation,
    pub u_tilde: Colligation,
}

/// Builds `V = [X_j, b_j; -a_0 ⟨·, b⟩, a_0]` and the isometric extension `Ũ`
/// that adds the row `[f(0), b(0)]`, with `a_0 = +√defect`.
pub fn build_a_colligation(ctx: &HbContext, tuple: &GleasonTuple) -> Result<AColligations> {
    let defect = tuple.defect;
    if defect <= ctx.tol.defect_tol {
        return Err(Error::QuasiExtreme(format!(
            "defect {defect:e} leaves a(0) = 0"
        )));
    }
    let a0 = defect.sqrt();
    let d = ctx.d();
    if ctx.b.is_constant() {
        let v = Colligation::new(
            vec![CMat::zeros(0, 0); d],
            vec![CVec::zeros(0); d],
            CMat::zeros(1, 0),
            CVec::from_element(1, Complex64::new(a0, 0.0)),
        )?;
        let u_tilde = Colligation::new(
            vec![CMat::zeros(0, 0); d],
            vec![CVec::zeros(0); d],
            CMat::zeros(2, 0),
            CVec::from_vec(vec![ctx.b0(), Complex64::new(a0, 0.0)]),
        )?;
        return Ok(AColligations { a0, v, u_tilde });
    }
    let ops = GleasonOperators::new(ctx, tuple)?;
    let fm = functional_model_colligation(&ops)?;
    let m = ops.model_dim();
    let row = CMat::from_fn(1, m, |_, k| ops.b_model[k].conj() * -a0);
    let v = Colligation::new(
        fm.a.clone(),
        fm.b.clone(),
        row.clone(),
        CVec::from_element(1, Complex64::new(a0, 0.0)),
    )?;
    let mut c2 = CMat::zeros(2, m);
    c2.row_mut(0).copy_from(&fm.c.row(0));
    c2.row_mut(1).copy_from(&row.row(0));
    let u_tilde = Colligation::new(
        ops.x_range.clone(),
        ops.b_j_range.clone(),
        c2,
        CVec::from_vec(vec![ops.b.constant_term(), Complex64::new(a0, 0.0)]),
    )?;
    Ok(AColligations { a0, v, u_tilde })
}

/// Largest degree at which column positivity is checked: 20, reduced so that
/// the compressed matrix stays below 1000 rows.
pub fn positivity_budget(d: usize) -> usize {
    let mut n = 20;
    while n > 1 && basis_len(d, n) > 1000 {
        n -= 1;
    }
    n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityPoint {
    pub degree: usize,
    pub min_eig: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub a0: f64,
    pub iso_residual: f64,
    pub defect: f64,
    pub positivity_min_eig: f64,
    pub positivity: Vec<PositivityPoint>,
    pub traces: Vec<ScoreTrace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AConstruction {
    pub a: Poly,
    pub tuple: GleasonTuple,
    pub colligations: AColligations,
    pub certificate: Certificate,
}

/// `λ_min(Q_N)` for `N = 0..=budget`.
pub fn positivity_profile(b: &Poly, a: &Poly, budget: usize) -> Result<Vec<PositivityPoint>> {
    (0..=budget)
        .map(|n| {
            Ok(PositivityPoint {
                degree: n,
                min_eig: column_positivity(b, a, n)?,
            })
        })
        .collect()
}

/// Verdict, tuple, `a_0`, colligation, Taylor expansion of `a` through
/// degree `n_out` and the column positivity check, end to end.
pub fn construct_a(ctx: &HbContext, schedule: &Schedule, n_out: usize) -> Result<AConstruction> {
    let evidence = qe_verdict(ctx, schedule)?;
    construct_a_from_evidence(ctx, evidence, n_out)
}

/// [`construct_a`] after the verdict stage.
pub fn construct_a_from_evidence(
    ctx: &HbContext,
    evidence: VerdictEvidence,
    n_out: usize,
) -> Result<AConstruction> {
    match evidence.verdict {
        Verdict::NotQuasiExtreme => {}
        Verdict::QuasiExtreme => {
            return Err(Error::QuasiExtreme(format!(
                "minimal defect {:e}; b has no nonzero column partner",
                evidence.min_defect
            )))
        }
        Verdict::Inconclusive => {
            return Err(Error::Inconclusive(format!(
                "b: {:?}, 1-b: {:?}, minimal defect {:e}{}",
                evidence.b_trace.class,
                evidence.one_minus_b_trace.class,
                evidence.min_defect,
                evidence
                    .notes
                    .iter()
                    .map(|n| format!("; {n}"))
                    .collect::<String>()
            )))
        }
    }
    let tuple = solve_min_defect(ctx)?;
    let cols = build_a_colligation(ctx, &tuple)?;
    let iso = isometry_residual(&cols.u_tilde);
    let a = transfer_taylor(&cols.v, n_out)?.remove(0).chop(1e-15);
    let positivity = positivity_profile(&ctx.b, &a, positivity_budget(ctx.d()))?;
    let min_eig = positivity
        .iter()
        .map(|p| p.min_eig)
        .fold(f64::INFINITY, f64::min);
    let certificate = Certificate {
        verdict: evidence.verdict,
        a0: cols.a0,
        iso_residual: iso,
        defect: tuple.defect,
        positivity_min_eig: min_eig,
        positivity,
        traces: vec![evidence.b_trace, evidence.one_minus_b_trace],
    };
    Ok(AConstruction {
        a,
        tuple,
        colligations: cols,
        certificate,
    })
}

/// Taylor expansion of `a` from the `V` colligation without the verdict
/// stage; used for constant symbols and by callers that already hold a
/// verdict.
pub fn a_from_tuple(ctx: &HbContext, tuple: &GleasonTuple, n_out: usize) -> Result<Poly> {
    let cols = build_a_colligation(ctx, tuple)?;
    Ok(transfer_taylor(&cols.v, n_out)?.remove(0))
}

/// `true` when `a(0)` is real and positive and agrees with `a_0`.
pub fn a0_matches(a: &Poly, a0: f64, tol: f64) -> bool {
    let c = a.constant_term();
    c.re > 0.0 && (c - Complex64::new(a0, 0.0)).norm() <= tol * a0.max(1.0) && c.im.abs() <= tol
}

impl AColligations {
    pub fn a_value(&self, z: &[Complex64]) -> Result<Complex64> {
        Ok(transfer_eval(&self.v, z)?[0])
    }
}
