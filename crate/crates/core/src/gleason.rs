//! Gleason solutions in H(b): admissible tuples, the operators `X_j` and the
//! rank-two defect identity.
//!
//! The operators are modelled on the polynomials `P_N` of the context degree,
//! orthonormalized in the estimated `H(b)` inner product. `X_j f` is the
//! minimal-norm solution of `f - f(0) = Σ z_j f_j` with `f_j ∈ P_{N-1}`; in one
//! variable it is the backward shift.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dbr::{HbContext, NodeSet};
use crate::error::{Error, Result};
use crate::index::{Basis, MultiIndex, Poly, PolyJson};
use crate::linalg::{CMat, CVec, KktSolver};

/// A Gleason tuple `(b_1, …, b_d)` for `b` with its defect
/// `1 - |b(0)|² - Σ ‖b_j‖²_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GleasonTuple {
    pub b_js: Vec<Poly>,
    pub defect: f64,
    pub norms: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GleasonTupleJson {
    pub d: usize,
    pub b_js: Vec<PolyJson>,
    pub defect: f64,
    pub norms: Vec<f64>,
}

impl GleasonTuple {
    pub fn d(&self) -> usize {
        self.b_js.len()
    }

    pub fn norm_sum(&self) -> f64 {
        self.norms.iter().sum()
    }

    pub fn to_json(&self) -> GleasonTupleJson {
        GleasonTupleJson {
            d: self.d(),
            b_js: self.b_js.iter().map(PolyJson::from).collect(),
            defect: self.defect,
            norms: self.norms.clone(),
        }
    }

    pub fn from_json(raw: GleasonTupleJson) -> Result<Self> {
        let b_js = raw
            .b_js
            .into_iter()
            .map(Poly::try_from)
            .collect::<Result<Vec<_>>>()?;
        if b_js.len() != raw.d || raw.norms.len() != raw.d {
            return Err(Error::InvalidInput("tuple length differs from d".into()));
        }
        Ok(GleasonTuple {
            b_js,
            defect: raw.defect,
            norms: raw.norms,
        })
    }

    /// `Σ z_j b_j - (b - b(0))` evaluated in exact rational arithmetic on the
    /// stored coefficients; returns the largest coefficient modulus bound
    /// (`max(|re|, |im|)`) of the residual.
    pub fn constraint_residual_exact(&self, b: &Poly) -> Result<BigRational> {
        exact_gleason_residual(b, &self.b_js)
    }
}

fn to_rat(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

/// Exact residual of `f - f(0) = Σ z_j f_j` on the stored coefficients.
pub fn exact_gleason_residual(f: &Poly, parts: &[Poly]) -> Result<BigRational> {
    let d = f.dim();
    if parts.len() != d || parts.iter().any(|p| p.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: parts.len(),
        });
    }
    let mut acc: std::collections::BTreeMap<MultiIndex, (BigRational, BigRational)> =
        Default::default();
    for (alpha, v) in f.terms() {
        if alpha.degree() == 0 {
            continue;
        }
        let e = acc
            .entry(alpha.clone())
            .or_insert_with(|| (BigRational::zero(), BigRational::zero()));
        e.0 -= to_rat(v.re);
        e.1 -= to_rat(v.im);
    }
    for (j, p) in parts.iter().enumerate() {
        for (alpha, v) in p.terms() {
            let e = acc
                .entry(alpha.bump(j))
                .or_insert_with(|| (BigRational::zero(), BigRational::zero()));
            e.0 += to_rat(v.re);
            e.1 += to_rat(v.im);
        }
    }
    let mut worst = BigRational::zero();
    for (re, im) in acc.values() {
        for x in [re.abs(), im.abs()] {
            if x > worst {
                worst = x;
            }
        }
    }
    Ok(worst)
}

fn exponent(x: f64) -> i32 {
    if x == 0.0 {
        i32::MIN
    } else {
        x.abs().log2().floor() as i32
    }
}

fn round_to(x: f64, q: f64) -> f64 {
    (x / q).round() * q
}

/// Adjusts `parts` so that `Σ z_j f_j = f - f(0)` holds coefficientwise in
/// exact arithmetic whenever the target coefficients allow it.
///
/// For each target monomial the contributions are rounded to a common dyadic
/// grid, and the last contributing variable absorbs the remainder, which is
/// then exactly representable.
pub fn exactify(f: &Poly, parts: &mut [Poly]) {
    let d = f.dim();
    let mut targets: Vec<MultiIndex> = f
        .terms()
        .map(|(a, _)| a.clone())
        .filter(|a| a.degree() > 0)
        .collect();
    for (j, p) in parts.iter().enumerate() {
        for (a, _) in p.terms() {
            targets.push(a.bump(j));
        }
    }
    targets.sort();
    targets.dedup();
    for alpha in targets {
        let slots: Vec<usize> = (0..d).filter(|&j| alpha.entries()[j] > 0).collect();
        let last = *slots.last().expect("non-constant monomial");
        let key = |j: usize| alpha.minus(&MultiIndex::unit(d, j)).expect("slot");
        let target = f.coeff(&alpha);
        let mut free: Vec<(usize, Complex64)> = slots[..slots.len() - 1]
            .iter()
            .map(|&j| (j, parts[j].coeff(&key(j))))
            .collect();
        let mut out = Complex64::zero();
        for part in 0..2 {
            let pick = |v: Complex64| if part == 0 { v.re } else { v.im };
            let r = pick(target);
            let e_free = free
                .iter()
                .map(|(_, v)| exponent(pick(*v)))
                .max()
                .unwrap_or(i32::MIN);
            let q_exp = if r != 0.0 {
                exponent(r) - 52
            } else if e_free == i32::MIN {
                i32::MIN
            } else {
                e_free + 3 - 52
            };
            let mut s = 0.0;
            for (_, v) in free.iter_mut() {
                let x = pick(*v);
                let x = if q_exp == i32::MIN || q_exp < -1070 {
                    x
                } else {
                    round_to(x, 2f64.powi(q_exp))
                };
                if part == 0 {
                    v.re = x;
                } else {
                    v.im = x;
                }
                s += x;
            }
            let rem = r - s;
            if part == 0 {
                out.re = rem;
            } else {
                out.im = rem;
            }
        }
        for (j, v) in free {
            parts[j].set(key(j), v);
        }
        parts[last].set(key(last), out);
    }
}

/// Minimal-norm Gleason solver on `P_n`: for `f ∈ P_n`, minimizes
/// `Σ f_jᴴ H f_j` over `f_j ∈ P_{n-1}` subject to `Σ z_j f_j = f - f(0)`.
pub struct MinNormGleason {
    d: usize,
    n: usize,
    basis_n: Basis,
    basis_u: Basis,
    kkt: KktSolver,
}

impl MinNormGleason {
    /// `h` is the Gram matrix on `P_{n-1}` in monomial coordinates.
    pub fn new(d: usize, n: usize, h: &CMat) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput(
                "Gleason solver needs degree at least 1".into(),
            ));
        }
        let basis_n = Basis::new(d, n);
        let basis_u = Basis::new(d, n - 1);
        let nu = basis_u.len();
        if h.nrows() != nu {
            return Err(Error::Numerical("Gram block has the wrong size".into()));
        }
        let mut hb = CMat::zeros(d * nu, d * nu);
        for j in 0..d {
            hb.view_mut((j * nu, j * nu), (nu, nu)).copy_from(h);
        }
        let nc = basis_n.len() - 1;
        let mut a = CMat::zeros(nc, d * nu);
        for j in 0..d {
            for (k, alpha) in basis_u.elems.iter().enumerate() {
                let row = basis_n
                    .position(&alpha.bump(j))
                    .expect("shifted index in P_n")
                    - 1;
                a[(row, j * nu + k)] = Complex64::one();
            }
        }
        let kkt = KktSolver::new(&hb, &a)?;
        Ok(MinNormGleason {
            d,
            n,
            basis_n,
            basis_u,
            kkt,
        })
    }

    pub fn solve(&self, f: &Poly) -> Result<Vec<Poly>> {
        if f.degree_or_zero() > self.n {
            return Err(Error::InvalidInput(format!(
                "degree {} exceeds the solver degree {}",
                f.degree_or_zero(),
                self.n
            )));
        }
        let coeffs = f.to_basis_vector(&self.basis_n);
        let r = CVec::from_iterator(coeffs.len() - 1, coeffs[1..].iter().copied());
        let x = self.kkt.solve(&r)?;
        let nu = self.basis_u.len();
        let mut parts: Vec<Poly> = (0..self.d)
            .map(|j| Poly::from_basis_vector(&self.basis_u, &x.as_slice()[j * nu..(j + 1) * nu]))
            .collect();
        exactify(f, &mut parts);
        Ok(parts)
    }
}

/// Minimizes `Σ ‖b_j‖²_b` over admissible decompositions
/// `b - b(0) = Σ z_j b_j` with `b_j ∈ P_{N-1}`.
pub fn solve_min_defect(ctx: &HbContext) -> Result<GleasonTuple> {
    let n = ctx.degree;
    let h = ctx.gram.gram_monomial(n - 1);
    let solver = MinNormGleason::new(ctx.d(), n, &h)?;
    let b_js = solver.solve(&ctx.b)?;
    tuple_with_norms(ctx, b_js)
}

fn tuple_with_norms(ctx: &HbContext, b_js: Vec<Poly>) -> Result<GleasonTuple> {
    let norms = b_js
        .iter()
        .map(|p| ctx.gram.norm_sq(p))
        .collect::<Result<Vec<f64>>>()?;
    let defect = 1.0 - ctx.b0().norm_sqr() - norms.iter().sum::<f64>();
    Ok(GleasonTuple {
        b_js,
        defect,
        norms,
    })
}

/// Power series of `b/(1 - b)` through degree `n`.
pub fn herglotz_series(b: &Poly, n: usize) -> Result<Poly> {
    let d = b.dim();
    let b0 = b.constant_term();
    let denom = Complex64::one() - b0;
    if denom.norm() < 1e-12 {
        return Err(Error::HerglotzSingularity(denom.norm()));
    }
    let basis = Basis::new(d, n);
    let mut g = vec![Complex64::zero(); basis.len()];
    for (i, alpha) in basis.elems.iter().enumerate() {
        let mut acc = b.coeff(alpha);
        for (gamma, bg) in b.terms() {
            if gamma.degree() == 0 {
                continue;
            }
            if let Some(rest) = alpha.minus(gamma) {
                acc += bg * g[basis.position(&rest).expect("lower index")];
            }
        }
        g[i] = acc / denom;
    }
    Ok(Poly::from_basis_vector(&basis, &g))
}

/// The canonical tuple `b_j = (1 - b(0)) (1 - b) V_j* (b/(1 - b))`, with
/// `V_j*` the minimal-norm Gleason solution in the Herglotz space `L(b)`.
pub fn canonical_tuple(ctx: &HbContext) -> Result<GleasonTuple> {
    if ctx.b.is_constant() {
        let d = ctx.d();
        return tuple_with_norms(ctx, vec![Poly::zero(d); d]);
    }
    let b_norm = ctx.gram.norm_sq(&ctx.b)?;
    if !b_norm.is_finite() {
        return Err(Error::QuasiExtreme("b is not in H(b)".into()));
    }
    let d = ctx.d();
    let n = ctx.degree;
    let deg_b = ctx.b.degree_or_zero();
    let np = n - deg_b + 1;
    let one = Poly::constant(d, Complex64::one());
    let omb = &one - &ctx.b;
    let g0 = herglotz_series(&ctx.b, np)?;
    // Gram of L(b) on P_{np-1}: ⟨f, g⟩_L = ⟨(1-b) f, (1-b) g⟩_b
    let bu = Basis::new(d, np - 1);
    let bn = Basis::new(d, n);
    let gm = ctx.gram.gram_monomial(n);
    let mut mult = CMat::zeros(bn.len(), bu.len());
    for (k, alpha) in bu.elems.iter().enumerate() {
        for (gamma, v) in omb.terms() {
            let i = bn.position(&alpha.plus(gamma)).expect("product within P_N");
            mult[(i, k)] += *v;
        }
    }
    let gl = mult.adjoint() * gm * &mult;
    let solver = MinNormGleason::new(d, np, &gl)?;
    let v = solver.solve(&g0)?;
    let scale = Complex64::one() - ctx.b0();
    let mut b_js: Vec<Poly> = v
        .iter()
        .map(|vj| (&omb * vj).scale(scale).truncate(n as u32 - 1))
        .collect();
    exactify(&ctx.b, &mut b_js);
    tuple_with_norms(ctx, b_js)
}

/// `|a_0|² = 1/(1 + ‖b‖²_b)`, refusing when `b ∉ H(b)`.
pub fn a0_from_hbnorm(ctx: &HbContext) -> Result<f64> {
    let nb = ctx.gram.norm_sq(&ctx.b)?;
    if !nb.is_finite() {
        return Err(Error::QuasiExtreme("‖b‖_b is infinite".into()));
    }
    Ok(1.0 / (1.0 + nb))
}

/// Matrices of the Gleason operators on the orthonormalized model space.
///
/// The state space is `P_N`. `X_j` maps it into `P_{N+K-1}`, where `K` is the
/// Gram margin of the context; `x_range` keeps the images in orthonormal
/// coordinates of that larger space and `x_model` their compressions to the
/// state space.
pub struct GleasonOperators {
    pub d: usize,
    pub degree: usize,
    pub tuple: GleasonTuple,
    pub b: Poly,
    /// Monomial basis of the state space `P_N`.
    pub basis: Basis,
    /// Monomial basis of the range space `P_{N+K-1}`.
    pub range_basis: Basis,
    /// Columns: monomial coefficients of the orthonormal state basis.
    pub phi: CMat,
    /// `f ↦ Φᴴ G f` from monomial coefficients in `P_{N+K-1}` to state
    /// coordinates of the orthogonal projection onto `P_N`.
    pub to_model: CMat,
    /// `R` with `RᴴR = G` on the range space.
    pub range_factor: CMat,
    /// `X_j`, monomial coordinates of `P_N` to those of `P_{N+K-1}`.
    pub x_monomial: Vec<CMat>,
    /// Compression of `X_j` to the state space.
    pub x_model: Vec<CMat>,
    /// `R X_j Φ`.
    pub x_range: Vec<CMat>,
    /// State coordinates of `b_j`.
    pub b_j_model: Vec<CVec>,
    /// `R b_j`.
    pub b_j_range: Vec<CVec>,
    /// State coordinates of `b`.
    pub b_model: CVec,
    /// `P_{N+K}`, where inner products are available.
    full_basis: Basis,
    gram: CMat,
}

impl GleasonOperators {
    pub fn new(ctx: &HbContext, tuple: &GleasonTuple) -> Result<Self> {
        if ctx.b.is_constant() {
            return Err(Error::ConstantSymbol);
        }
        let d = ctx.d();
        let n = ctx.degree;
        if tuple.d() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: tuple.d(),
            });
        }
        let top = ctx.gram.degree.max(n);
        let basis = Basis::new(d, n);
        let range_basis = Basis::new(d, top - 1);
        let full_basis = Basis::new(d, top);
        let gram = ctx.gram.gram_monomial(top);
        let phi = ctx.gram.model_basis_at(n);
        let to_model = phi.adjoint() * gram.view((0, 0), (basis.len(), range_basis.len()));
        let range_factor = ctx.gram.gram_factor(top - 1);
        let solver = MinNormGleason::new(d, top, &ctx.gram.gram_monomial(top - 1))?;
        let mut x_monomial = vec![CMat::zeros(range_basis.len(), basis.len()); d];
        for (k, alpha) in basis.elems.iter().enumerate() {
            let parts = solver.solve(&Poly::monomial(alpha.clone(), Complex64::one()))?;
            for (j, p) in parts.iter().enumerate() {
                let col = p.to_basis_vector(&range_basis);
                for (i, v) in col.into_iter().enumerate() {
                    x_monomial[j][(i, k)] = v;
                }
            }
        }
        let x_model = x_monomial.iter().map(|x| &to_model * x * &phi).collect();
        let x_range = x_monomial
            .iter()
            .map(|x| &range_factor * x * &phi)
            .collect();
        let mono = |p: &Poly| CVec::from_vec(p.to_basis_vector(&range_basis));
        let b_j_model = tuple.b_js.iter().map(|p| &to_model * mono(p)).collect();
        let b_j_range = tuple.b_js.iter().map(|p| &range_factor * mono(p)).collect();
        let b_model = &to_model * mono(&ctx.b);
        Ok(GleasonOperators {
            d,
            degree: n,
            tuple: tuple.clone(),
            b: ctx.b.clone(),
            basis,
            range_basis,
            phi,
            to_model,
            range_factor,
            x_monomial,
            x_model,
            x_range,
            b_j_model,
            b_j_range,
            b_model,
            full_basis,
            gram,
        })
    }

    pub fn model_dim(&self) -> usize {
        self.phi.ncols()
    }

    /// State coordinates of the projection of `f ∈ P_{N+K-1}` onto `P_N`.
    pub fn model_coords(&self, f: &Poly) -> CVec {
        &self.to_model * CVec::from_vec(f.to_basis_vector(&self.range_basis))
    }

    /// State coordinates of the projection of `k^b_w` onto `P_N`.
    pub fn kernel_coords(&self, w: &[Complex64]) -> CVec {
        let e = CVec::from_iterator(
            self.basis.len(),
            self.basis.elems.iter().map(|a| a.monomial(w).conj()),
        );
        self.phi.adjoint() * e
    }

    /// `⟨f, g⟩_b` for polynomials of degree at most `N + K`.
    pub fn inner(&self, f: &Poly, g: &Poly) -> Complex64 {
        let vf = CVec::from_vec(f.to_basis_vector(&self.full_basis));
        let vg = CVec::from_vec(g.to_basis_vector(&self.full_basis));
        vg.dotc(&(&self.gram * vf))
    }

    /// Applies `X_j` to a polynomial of degree at most `N`.
    pub fn apply_x(&self, j: usize, f: &Poly) -> Poly {
        let v = CVec::from_vec(f.to_basis_vector(&self.basis));
        let out = &self.x_monomial[j] * v;
        Poly::from_basis_vector(&self.range_basis, out.as_slice())
    }
}

/// Model coordinates of `X_j k^b_w = w̄_j k^b_w - b(w)* b_j`.
pub fn apply_x_on_kernel(ops: &GleasonOperators, j: usize, w: &[Complex64]) -> CVec {
    let bw = ops.b.eval(w);
    ops.kernel_coords(w) * w[j].conj() - &ops.b_j_model[j] * bw.conj()
}

/// `X_j* f = z_j f - ⟨f, b_j⟩_b b` for `f` of degree at most `N + K - deg b`.
pub fn apply_xstar(ops: &GleasonOperators, j: usize, f: &Poly) -> Result<Poly> {
    let limit = ops
        .full_basis
        .max_degree
        .saturating_sub(ops.b.degree_or_zero().max(1));
    if f.degree_or_zero() > limit && !f.is_zero() {
        return Err(Error::InvalidInput(format!(
            "X* needs degree at most {limit}, got {}",
            f.degree_or_zero()
        )));
    }
    let ip = ops.inner(f, &ops.tuple.b_js[j]);
    Ok(&f.shift(j) - &ops.b.scale(ip))
}

/// Largest gap between `⟨(I - Σ X_j*X_j) k_w, k_z⟩_b` and
/// `⟨(k_0⊗k_0 + |a_0|² b⊗b) k_w, k_z⟩_b` over all node pairs, both sides
/// written in closed form from `b`, the tuple and its norms.
///
/// `a0_sq` overrides the tuple defect as the value of `|a_0|²`.
pub fn defect_identity_residual(
    b: &Poly,
    tuple: &GleasonTuple,
    nodes: &NodeSet,
    a0_sq: Option<f64>,
) -> Result<f64> {
    let d = b.dim();
    if tuple.d() != d || nodes.d != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: tuple.d(),
        });
    }
    let a0_sq = a0_sq.unwrap_or(tuple.defect);
    let b0 = b.constant_term();
    let pts = &nodes.points;
    let bv: Vec<Complex64> = pts.iter().map(|z| b.eval(z)).collect();
    let bj: Vec<Vec<Complex64>> = pts
        .iter()
        .map(|z| tuple.b_js.iter().map(|p| p.eval(z)).collect())
        .collect();
    let mut worst: f64 = 0.0;
    for (iz, z) in pts.iter().enumerate() {
        for (iw, w) in pts.iter().enumerate() {
            let zw: Complex64 = z.iter().zip(w).map(|(a, c)| a * c.conj()).sum();
            let k = (Complex64::one() - bv[iz] * bv[iw].conj()) / (Complex64::one() - zw);
            let mut sum = Complex64::zero();
            for j in 0..d {
                sum += z[j] * w[j].conj() * k
                    - w[j].conj() * bv[iz] * bj[iw][j].conj()
                    - bv[iw].conj() * z[j] * bj[iz][j]
                    + bv[iw].conj() * bv[iz] * tuple.norms[j];
            }
            let lhs = k - sum;
            let rhs = (Complex64::one() - b0 * bv[iw].conj())
                * (Complex64::one() - bv[iz] * b0.conj())
                + bv[iz] * bv[iw].conj() * a0_sq;
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(worst)
}

/// Numerator and denominator sizes of an exact residual, for reporting.
pub fn rational_to_f64(x: &BigRational) -> f64 {
    let n: &BigInt = x.numer();
    let d: &BigInt = x.denom();
    match (n.to_f64(), d.to_f64()) {
        (Some(a), Some(b)) if b != 0.0 => a / b,
        _ => f64::NAN,
    }
}

/// True when `x` is exactly zero.
pub fn is_exact_zero(x: &BigRational) -> bool {
    x.is_zero() && x.denom().is_one()
}
