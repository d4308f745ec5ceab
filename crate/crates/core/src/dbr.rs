//! De Branges–Rovnyak kernels, H(b)-norm estimators and the quasi-extremity
//! verdict.
//!
//! Two estimators of `‖f‖²_b` are provided. The node estimator evaluates
//! `f(Z)ᴴ K(Z)⁺ f(Z)` on a finite node set; it is a lower bound that grows
//! towards `‖f‖²_b` as nodes are added and is `+∞` when `f ∉ H(b)`. The
//! truncation estimator uses the exact finite sections of `Δ = I - M_b M_b*`:
//! for `f` of degree at most `n`, `⟨Δ_M⁻¹ f, f⟩` is computed for increasing `M`
//! through the Schur complement of `Δ_M` onto `P_n`.

use nalgebra::Cholesky;
use num_complex::Complex64;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardy::{h2_norm_sq, multiplier_norm_lower};
use crate::index::{basis_len, Basis, Poly};
use crate::linalg::{
    banded_schur_tail, hermitize, trace_re, CMat, CVec, HermitianEigen, HermitianLlt, PsdPinv,
};

/// Every numerical threshold used by the analysis, with their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative eigenvalue cutoff for pseudo-inverses.
    pub pinv_cutoff: f64,
    /// Ridge added to node kernel matrices before scoring, in units of the
    /// kernel diagonal bound `1/(1 - ρ²)` of the node radius. Fixed across a
    /// nested family of node sets, so scores never drop as nodes are added.
    pub score_ridge: f64,
    /// Relative residual above which a vector is declared outside a range.
    pub range_tol: f64,
    /// Relative agreement required between independent estimates.
    pub cross_tol: f64,
    /// Defects at or below this value count as zero.
    pub defect_tol: f64,
    /// Refute contractivity when the multiplier-norm lower bound exceeds `1 + tol`.
    pub contractivity_tol: f64,
    /// Refute contractivity when `λ_min(K) < -tol·trace(K)`.
    pub kernel_psd_tol: f64,
    /// Plateau threshold on relative score increments.
    pub plateau: f64,
    /// Divergence cap in units of `‖f‖²_{H²}`.
    pub div_cap: f64,
    /// Nodes with `|1 - b(z)|` below this are resampled.
    pub herglotz_guard: f64,
    /// Acceptance threshold for colligation isometry residuals.
    pub iso_tol: f64,
    /// Acceptance threshold for the column positivity of `(b, a)`.
    pub positivity_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            pinv_cutoff: 1e-12,
            score_ridge: 1e-12,
            range_tol: 1e-6,
            cross_tol: 0.01,
            defect_tol: 1e-6,
            contractivity_tol: 1e-8,
            kernel_psd_tol: 1e-8,
            plateau: 0.02,
            div_cap: 1e6,
            herglotz_guard: 1e-8,
            iso_tol: 1e-8,
            positivity_tol: 1e-6,
        }
    }
}

impl Tolerances {
    /// Overrides one field by name.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "pinv_cutoff" => &mut self.pinv_cutoff,
            "score_ridge" => &mut self.score_ridge,
            "range_tol" => &mut self.range_tol,
            "cross_tol" => &mut self.cross_tol,
            "defect_tol" => &mut self.defect_tol,
            "contractivity_tol" => &mut self.contractivity_tol,
            "kernel_psd_tol" => &mut self.kernel_psd_tol,
            "plateau" => &mut self.plateau,
            "div_cap" => &mut self.div_cap,
            "herglotz_guard" => &mut self.herglotz_guard,
            "iso_tol" => &mut self.iso_tol,
            "positivity_tol" => &mut self.positivity_tol,
            _ => return Err(Error::InvalidInput(format!("unknown tolerance '{key}'"))),
        };
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance '{key}' must be a non-negative number"
            )));
        }
        *slot = value;
        Ok(())
    }
}

fn norm_sq(z: &[Complex64]) -> f64 {
    z.iter().map(|x| x.norm_sqr()).sum()
}

fn dot_conj(z: &[Complex64], w: &[Complex64]) -> Complex64 {
    z.iter().zip(w).map(|(a, b)| a * b.conj()).sum()
}

fn check_point(b: &Poly, z: &[Complex64]) -> Result<()> {
    if z.len() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: z.len(),
        });
    }
    if norm_sq(z) >= 1.0 {
        return Err(Error::OutsideBall(format!("{z:?}")));
    }
    Ok(())
}

/// `k^b_w(z) = (1 - b(z) b(w)*) / (1 - z w*)`.
pub fn kb_eval(b: &Poly, z: &[Complex64], w: &[Complex64]) -> Result<Complex64> {
    check_point(b, z)?;
    check_point(b, w)?;
    Ok(kb_unchecked(b.eval(z), b.eval(w), z, w))
}

fn kb_unchecked(bz: Complex64, bw: Complex64, z: &[Complex64], w: &[Complex64]) -> Complex64 {
    (Complex64::one() - bz * bw.conj()) / (Complex64::one() - dot_conj(z, w))
}

fn herglotz_guard(bz: Complex64) -> Result<()> {
    let gap = (Complex64::one() - bz).norm();
    if gap < 1e-8 {
        return Err(Error::HerglotzSingularity(gap));
    }
    Ok(())
}

/// `K^b_w(z) = k^b_w(z) / ((1 - b(z))(1 - b(w))*)`, the kernel of `L(b)`.
pub fn herglotz_kernel_eval(b: &Poly, z: &[Complex64], w: &[Complex64]) -> Result<Complex64> {
    check_point(b, z)?;
    check_point(b, w)?;
    let (bz, bw) = (b.eval(z), b.eval(w));
    herglotz_guard(bz)?;
    herglotz_guard(bw)?;
    let pre = (Complex64::one() - bz) * (Complex64::one() - bw).conj();
    Ok(kb_unchecked(bz, bw, z, w) / pre)
}

/// The same kernel written through `G_b = (1 + b)/(1 - b)`:
/// `½ (G_b(z) + G_b(w)*) / (1 - z w*)`.
pub fn herglotz_kernel_cayley(b: &Poly, z: &[Complex64], w: &[Complex64]) -> Result<Complex64> {
    check_point(b, z)?;
    check_point(b, w)?;
    let (bz, bw) = (b.eval(z), b.eval(w));
    herglotz_guard(bz)?;
    herglotz_guard(bw)?;
    let g = |v: Complex64| (Complex64::one() + v) / (Complex64::one() - v);
    Ok((g(bz) + g(bw).conj()) * 0.5 / (Complex64::one() - dot_conj(z, w)))
}

/// Sample points in a ball of radius `radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    pub d: usize,
    pub points: Vec<Vec<Complex64>>,
    pub seed: Option<u64>,
    pub radius: f64,
}

impl NodeSet {
    /// `count` points uniform in the ball of radius `radius`, by rejection
    /// sampling on the real cube `[-radius, radius]^{2d}`.
    pub fn sample(d: usize, count: usize, seed: u64, radius: f64) -> Result<Self> {
        Self::sample_avoiding(d, count, seed, radius, None, 0.0)
    }

    /// As [`NodeSet::sample`], but points where `|1 - b(z)| < guard` are
    /// replaced by fresh draws.
    pub fn sample_avoiding(
        d: usize,
        count: usize,
        seed: u64,
        radius: f64,
        b: Option<&Poly>,
        guard: f64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("d must be at least 1".into()));
        }
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidInput(format!(
                "node radius {radius} must lie in (0, 1)"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut points: Vec<Vec<Complex64>> = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while points.len() < count {
            attempts += 1;
            if attempts > 1000 * (count + 10) {
                return Err(Error::Numerical(
                    "node sampling kept hitting 1 - b = 0".into(),
                ));
            }
            let z: Vec<Complex64> = (0..d)
                .map(|_| {
                    Complex64::new(
                        rng.random_range(-radius..radius),
                        rng.random_range(-radius..radius),
                    )
                })
                .collect();
            if norm_sq(&z) > radius * radius {
                continue;
            }
            if let Some(b) = b {
                if (Complex64::one() - b.eval(&z)).norm() < guard {
                    continue;
                }
            }
            if points.iter().any(|p| p == &z) {
                continue;
            }
            points.push(z);
        }
        Ok(NodeSet {
            d,
            points,
            seed: Some(seed),
            radius,
        })
    }

    /// `count` points with uniform directions and `1 - |z|` log-uniform in
    /// `[1 - radius, 1]`, so every decade of distance to the sphere gets the
    /// same share of nodes. Points where `|1 - b(z)| < guard` are redrawn.
    pub fn sample_boundary_layers(
        d: usize,
        count: usize,
        seed: u64,
        radius: f64,
        b: Option<&Poly>,
        guard: f64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("d must be at least 1".into()));
        }
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidInput(format!(
                "node radius {radius} must lie in (0, 1)"
            )));
        }
        let depth = (1.0 - radius).ln();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut points: Vec<Vec<Complex64>> = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while points.len() < count {
            attempts += 1;
            if attempts > 1000 * (count + 10) {
                return Err(Error::Numerical(
                    "node sampling kept hitting 1 - b = 0".into(),
                ));
            }
            let dir: Vec<Complex64> = (0..d)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let n = norm_sq(&dir).sqrt();
            if n > 1.0 || n < 1e-3 {
                continue;
            }
            let r = 1.0 - (depth * rng.random_range(0.0..1.0f64)).exp();
            let z: Vec<Complex64> = dir.iter().map(|c| c * (r / n)).collect();
            if let Some(b) = b {
                if (Complex64::one() - b.eval(&z)).norm() < guard {
                    continue;
                }
            }
            if points.iter().any(|p| p == &z) {
                continue;
            }
            points.push(z);
        }
        Ok(NodeSet {
            d,
            points,
            seed: Some(seed),
            radius,
        })
    }

    pub fn from_points(d: usize, points: Vec<Vec<Complex64>>) -> Result<Self> {
        let mut radius: f64 = 0.0;
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
            let r = norm_sq(p).sqrt();
            if r >= 1.0 {
                return Err(Error::OutsideBall(format!("{p:?}")));
            }
            if points[..i].contains(p) {
                return Err(Error::InvalidInput("node points must be distinct".into()));
            }
            radius = radius.max(r);
        }
        Ok(NodeSet {
            d,
            points,
            seed: None,
            radius,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The first `n` points.
    pub fn prefix(&self, n: usize) -> NodeSet {
        NodeSet {
            d: self.d,
            points: self.points[..n.min(self.len())].to_vec(),
            seed: self.seed,
            radius: self.radius,
        }
    }

    pub fn to_json(&self) -> NodeSetJson {
        match self.seed {
            Some(seed) => NodeSetJson::Seeded {
                d: self.d,
                seed,
                radius: self.radius,
                count: self.len(),
            },
            None => NodeSetJson::Explicit {
                d: self.d,
                points: self
                    .points
                    .iter()
                    .map(|p| p.iter().map(|z| [z.re, z.im]).collect())
                    .collect(),
            },
        }
    }

    pub fn from_json(raw: &NodeSetJson) -> Result<Self> {
        match raw {
            NodeSetJson::Seeded {
                d,
                seed,
                radius,
                count,
            } => NodeSet::sample(*d, *count, *seed, *radius),
            NodeSetJson::Explicit { d, points } => NodeSet::from_points(
                *d,
                points
                    .iter()
                    .map(|p| p.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
                    .collect(),
            ),
        }
    }
}

/// Node sets on the wire: the seeded form is canonical.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeSetJson {
    Seeded {
        d: usize,
        seed: u64,
        radius: f64,
        count: usize,
    },
    Explicit {
        d: usize,
        points: Vec<Vec<[f64; 2]>>,
    },
}

/// `K[i, j] = k^b(z_i, z_j)` without any screening.
pub fn kernel_matrix_raw(b: &Poly, nodes: &NodeSet) -> CMat {
    let vals: Vec<Complex64> = nodes.points.iter().map(|z| b.eval(z)).collect();
    let n = nodes.len();
    let mut k = CMat::from_fn(n, n, |i, j| {
        kb_unchecked(vals[i], vals[j], &nodes.points[i], &nodes.points[j])
    });
    hermitize(&mut k);
    k
}

/// Kernel matrix on a node set, factored once for every membership score on
/// the same nodes.
///
/// Values come from `f(Z)ᴴ (K + εI)⁻¹ f(Z)` with `ε` set by the node radius
/// alone, which is nondecreasing along nested node sets. The range test uses
/// the truncated eigendecomposition of `K`.
pub struct NodeKernel {
    pub nodes: NodeSet,
    pub matrix: CMat,
    pub min_eig: f64,
    pub ridge: f64,
    factor: HermitianLlt,
    pinv: PsdPinv,
    range_tol: f64,
}

impl NodeKernel {
    pub fn new(b: &Poly, nodes: &NodeSet, tol: &Tolerances) -> Result<Self> {
        let matrix = kernel_matrix_raw(b, nodes);
        let eig = HermitianEigen::new(&matrix);
        let pinv = PsdPinv::from_eigen(&eig, tol.pinv_cutoff);
        let min_eig = eig.min();
        let tr = trace_re(&matrix);
        if min_eig < -tol.kernel_psd_tol * tr {
            return Err(Error::NotContractive(format!(
                "node kernel matrix has eigenvalue {min_eig:e} below -{:e}·trace",
                tol.kernel_psd_tol
            )));
        }
        let r2 = nodes.radius * nodes.radius;
        let mut ridge = tol.score_ridge / (1.0 - r2).max(f64::EPSILON);
        let n = nodes.len();
        let mut factor = None;
        for _ in 0..8 {
            let shifted = &matrix + CMat::identity(n, n) * Complex64::new(ridge, 0.0);
            factor = HermitianLlt::new(&shifted);
            if factor.is_some() {
                break;
            }
            // only reachable when rounding leaves K slightly indefinite
            ridge = 2.0 * ridge + (-min_eig).max(0.0);
        }
        let factor = factor
            .ok_or_else(|| Error::Numerical("node kernel matrix could not be factored".into()))?;
        Ok(NodeKernel {
            nodes: nodes.clone(),
            matrix,
            min_eig,
            ridge,
            factor,
            pinv,
            range_tol: tol.range_tol,
        })
    }

    /// `f(Z)ᴴ (K + εI)⁻¹ f(Z)`, or `+∞` when `f(Z)` is outside the range of `K`.
    pub fn score(&self, f: &Poly) -> Score {
        let v = CVec::from_iterator(
            self.nodes.len(),
            self.nodes.points.iter().map(|z| f.eval(z)),
        );
        let (_, residual) = self.pinv.quad_form(&v);
        let value = v.dotc(&self.factor.solve(&v)).re;
        let in_range = residual <= self.range_tol;
        Score {
            value: if in_range { value } else { f64::INFINITY },
            residual,
            rank: self.pinv.rank(),
            nodes: self.nodes.len(),
        }
    }
}

/// One membership score evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// The quadratic form, `+∞` when the range check fails.
    #[serde(with = "crate::report::extended_real")]
    pub value: f64,
    pub residual: f64,
    pub rank: usize,
    pub nodes: usize,
}

impl Score {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// How a schedule draws its nodes inside the ball of radius `radius`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLayout {
    /// Uniform in the ball.
    #[default]
    Uniform,
    /// Log-uniform in the distance to the sphere, see
    /// [`NodeSet::sample_boundary_layers`]. Resolves norms whose mass sits
    /// near the boundary.
    BoundaryLayers,
}

/// Geometric node-count schedule for the divergence classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base: usize,
    pub stages: usize,
    pub seed: u64,
    pub radius: f64,
    #[serde(default)]
    pub layout: NodeLayout,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            base: 16,
            stages: 5,
            seed: 42,
            radius: 0.9,
            layout: NodeLayout::Uniform,
        }
    }
}

impl Schedule {
    pub fn counts(&self) -> Vec<usize> {
        (0..self.stages).map(|k| self.base << k).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceClass {
    Plateau,
    Diverge,
    Undecided,
}

/// Scores of one function along a schedule, with its classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrace {
    pub function: String,
    pub h2_norm_sq: f64,
    pub scores: Vec<Score>,
    pub class: TraceClass,
}

/// Plateau: last two relative increments below `plateau`. Diverge: a score
/// above `div_cap·‖f‖²_{H²}` or range failures at two consecutive stages.
pub fn classify(scores: &[Score], h2: f64, tol: &Tolerances) -> TraceClass {
    let cap = tol.div_cap * h2.max(f64::MIN_POSITIVE);
    let consecutive_fail = scores
        .windows(2)
        .any(|w| !w[0].is_finite() && !w[1].is_finite());
    if consecutive_fail || scores.iter().any(|s| s.value.is_finite() && s.value > cap) {
        return TraceClass::Diverge;
    }
    if scores.len() < 3 || scores.iter().any(|s| !s.is_finite()) {
        return TraceClass::Undecided;
    }
    let inc: Vec<f64> = scores
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].value, w[1].value);
            if a == 0.0 && b == 0.0 {
                0.0
            } else {
                (b - a).abs() / a.abs().max(f64::MIN_POSITIVE)
            }
        })
        .collect();
    let k = inc.len();
    if inc[k - 1] < tol.plateau && inc[k - 2] < tol.plateau {
        TraceClass::Plateau
    } else {
        TraceClass::Undecided
    }
}

/// Scores `f` on nested prefixes of one seeded node sequence.
pub fn score_trace(
    b: &Poly,
    f: &Poly,
    label: &str,
    schedule: &Schedule,
    tol: &Tolerances,
) -> Result<ScoreTrace> {
    let kernels = schedule_kernels(b, schedule, tol)?;
    Ok(trace_from_kernels(&kernels, f, label, tol))
}

fn schedule_kernels(b: &Poly, schedule: &Schedule, tol: &Tolerances) -> Result<Vec<NodeKernel>> {
    let counts = schedule.counts();
    let total = counts.last().copied().unwrap_or(0);
    let sampler = match schedule.layout {
        NodeLayout::Uniform => NodeSet::sample_avoiding,
        NodeLayout::BoundaryLayers => NodeSet::sample_boundary_layers,
    };
    let all = sampler(
        b.dim(),
        total,
        schedule.seed,
        schedule.radius,
        Some(b),
        tol.herglotz_guard,
    )?;
    counts
        .iter()
        .map(|&n| NodeKernel::new(b, &all.prefix(n), tol))
        .collect()
}

fn trace_from_kernels(
    kernels: &[NodeKernel],
    f: &Poly,
    label: &str,
    tol: &Tolerances,
) -> ScoreTrace {
    let scores: Vec<Score> = kernels.iter().map(|k| k.score(f)).collect();
    let h2 = h2_norm_sq(f);
    ScoreTrace {
        function: label.to_string(),
        h2_norm_sq: h2,
        class: classify(&scores, h2, tol),
        scores,
    }
}

/// Degree-`m` graded basis stored flat, for estimation degrees far beyond
/// what [`Basis`] is meant for.
struct FlatBasis {
    d: usize,
    data: Vec<u32>,
}

impl FlatBasis {
    fn new(d: usize, m: usize) -> Self {
        let mut data = Vec::with_capacity(basis_len(d, m) * d);
        let mut cur = vec![0u32; d];
        for n in 0..=m as u32 {
            Self::fill(&mut data, &mut cur, 0, n);
        }
        FlatBasis { d, data }
    }

    fn fill(data: &mut Vec<u32>, cur: &mut [u32], pos: usize, rem: u32) {
        if pos == cur.len() - 1 {
            cur[pos] = rem;
            data.extend_from_slice(cur);
            return;
        }
        for a in (0..=rem).rev() {
            cur[pos] = a;
            Self::fill(data, cur, pos + 1, rem - a);
        }
    }

    fn len(&self) -> usize {
        self.data.len() / self.d
    }

    fn alpha(&self, i: usize) -> &[u32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Position of `α` in the graded order.
fn rank(alpha: &[u32]) -> usize {
    let d = alpha.len();
    let n: u32 = alpha.iter().sum();
    let mut r = if n == 0 {
        0
    } else {
        basis_len(d, n as usize - 1)
    };
    let mut rem = n;
    for (k, &a) in alpha.iter().enumerate().take(d - 1) {
        // tuples of the remaining d-k-1 entries summing to less than rem - a
        if rem > a {
            r += basis_len(d - k - 1, (rem - a - 1) as usize);
        }
        rem -= a;
    }
    r
}

/// `w(δ + γ) / w(δ)` as a ratio of short integer products.
fn weight_ratio(delta: &[u32], gamma: &[u32]) -> f64 {
    let mut num = 1.0f64;
    let mut den = 1.0f64;
    let total: u32 = delta.iter().sum();
    let mut step = 0u32;
    for (&dj, &gj) in delta.iter().zip(gamma) {
        for t in 1..=gj {
            num *= (dj + t) as f64;
            step += 1;
            den *= (total + step) as f64;
        }
    }
    num / den
}

/// Entries of `Δ = I - M_b M_b*` in orthonormal coordinates. They do not
/// depend on the truncation degree.
struct DeltaEntries {
    terms: Vec<(Vec<u32>, Complex64)>,
}

impl DeltaEntries {
    fn new(b: &Poly) -> Self {
        DeltaEntries {
            terms: b.terms().map(|(a, c)| (a.entries().to_vec(), *c)).collect(),
        }
    }

    fn entry(&self, alpha: &[u32], beta: &[u32], same: bool) -> Complex64 {
        let d = alpha.len();
        let mut acc = Complex64::zero();
        let mut delta = vec![0u32; d];
        let mut gp = vec![0u32; d];
        'outer: for (gamma, bg) in &self.terms {
            for j in 0..d {
                if gamma[j] > alpha[j] {
                    continue 'outer;
                }
                delta[j] = alpha[j] - gamma[j];
                if delta[j] > beta[j] {
                    continue 'outer;
                }
                gp[j] = beta[j] - delta[j];
            }
            if let Some((_, bgp)) = self.terms.iter().find(|(t, _)| t[..] == gp[..]) {
                let r = weight_ratio(&delta, gamma) * weight_ratio(&delta, &gp);
                acc += bg * bgp.conj() * r.sqrt();
            }
        }
        if same {
            Complex64::one() - acc
        } else {
            -acc
        }
    }
}

/// Largest index distance between coupled entries of `Δ` on `P_m`.
fn delta_bandwidth(b: &Poly, basis: &FlatBasis, m: usize) -> usize {
    let gammas: Vec<Vec<u32>> = b.terms().map(|(a, _)| a.entries().to_vec()).collect();
    if b.dim() == 1 {
        let degs: Vec<u32> = gammas.iter().map(|g| g[0]).collect();
        let lo = degs.iter().min().copied().unwrap_or(0);
        let hi = degs.iter().max().copied().unwrap_or(0);
        return (hi - lo) as usize;
    }
    let mut bw = 0usize;
    let d = b.dim();
    let mut s1 = vec![0u32; d];
    let mut s2 = vec![0u32; d];
    for i in 0..basis.len() {
        let delta = basis.alpha(i);
        let dd: u32 = delta.iter().sum();
        for g1 in &gammas {
            let d1 = dd + g1.iter().sum::<u32>();
            if d1 as usize > m {
                continue;
            }
            for j in 0..d {
                s1[j] = delta[j] + g1[j];
            }
            let r1 = rank(&s1);
            for g2 in &gammas {
                let d2 = dd + g2.iter().sum::<u32>();
                if d2 as usize > m {
                    continue;
                }
                for j in 0..d {
                    s2[j] = delta[j] + g2[j];
                }
                bw = bw.max(r1.abs_diff(rank(&s2)));
            }
        }
    }
    bw
}

/// Dense `Δ_n` (orthonormal coordinates, graded order).
pub fn delta_matrix(b: &Poly, n: usize) -> CMat {
    let basis = FlatBasis::new(b.dim(), n);
    let e = DeltaEntries::new(b);
    CMat::from_fn(basis.len(), basis.len(), |r, col| {
        e.entry(basis.alpha(r), basis.alpha(col), r == col)
    })
}

/// Convergence record of the truncation estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramTracePoint {
    pub estimation_degree: usize,
    pub b_norm_sq: f64,
}

/// The `H(b)` Gram data on `P_n`, estimated from sections of `Δ`.
#[derive(Clone, Debug)]
pub struct HbGram {
    pub d: usize,
    pub degree: usize,
    pub basis: Basis,
    /// Schur complement of `Δ_M` onto `P_n`; its pseudo-inverse is the Gram
    /// matrix in orthonormal coordinates.
    pub schur: CMat,
    pub estimation_degree: usize,
    /// False when `Δ` was numerically singular and the dense section `Δ_n`
    /// with a pseudo-inverse was used instead.
    pub eliminated: bool,
    pub converged: bool,
    pub trace: Vec<GramTracePoint>,
    sqrt_w: Vec<f64>,
    range_basis: CMat,
    range_values: Vec<f64>,
    range_tol: f64,
    pinv_cutoff: f64,
}

/// Caps on the estimation degree.
#[derive(Clone, Copy, Debug)]
pub struct GramBudget {
    pub max_degree_1d: usize,
    pub max_work: f64,
    pub rel_change: f64,
}

impl Default for GramBudget {
    fn default() -> Self {
        GramBudget {
            max_degree_1d: 1 << 20,
            max_work: 3e9,
            rel_change: 1e-13,
        }
    }
}

impl HbGram {
    pub fn estimate(b: &Poly, n: usize, tol: &Tolerances) -> Result<Self> {
        Self::estimate_with(b, n, tol, GramBudget::default())
    }

    pub fn estimate_with(b: &Poly, n: usize, tol: &Tolerances, budget: GramBudget) -> Result<Self> {
        let d = b.dim();
        let entries = DeltaEntries::new(b);
        let keep = basis_len(d, n);
        let deg_b = b.degree_or_zero();
        let mut m = (2 * n).max(n + 4 * deg_b).max(16);
        let mut prev: Option<CMat> = None;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut schur = None;
        let mut used = m;
        let basis_n = Basis::new(d, n);
        let b_orth = orth_coords(b, &basis_n);
        loop {
            let fb = FlatBasis::new(d, m);
            let bw = delta_bandwidth(b, &fb, m);
            let len = fb.len();
            if d > 1 && prev.is_some() && (len as f64) * ((bw + 1) as f64).powi(2) > budget.max_work
            {
                break;
            }
            let s = banded_schur_tail(len, keep, bw, 1e-13, |r, col| {
                entries.entry(fb.alpha(r), fb.alpha(col), r == col)
            });
            let Some(mut s) = s else {
                break;
            };
            hermitize(&mut s);
            used = m;
            if let Some(bn) = quad_inverse(&s, &b_orth) {
                trace.push(GramTracePoint {
                    estimation_degree: m,
                    b_norm_sq: bn,
                });
            }
            let done = match &prev {
                Some(p) => {
                    let scale = s.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    let diff = (&s - p).iter().map(|v| v.norm()).fold(0.0, f64::max);
                    diff <= budget.rel_change * scale
                }
                None => false,
            };
            schur = Some(s.clone());
            prev = Some(s);
            if done {
                converged = true;
                break;
            }
            let next = m * 2;
            if d == 1 && next > budget.max_degree_1d {
                break;
            }
            m = next;
        }
        let (schur, eliminated) = match schur {
            Some(s) => (s, true),
            None => {
                used = n;
                converged = true;
                let mut s = delta_matrix(b, n);
                hermitize(&mut s);
                (s, false)
            }
        };
        let pinv = PsdPinv::new(&schur, tol.pinv_cutoff);
        let sqrt_w = basis_n.weights.iter().map(|w| w.sqrt()).collect();
        let mut g = HbGram {
            d,
            degree: n,
            basis: basis_n,
            schur,
            estimation_degree: used,
            eliminated,
            converged,
            trace,
            sqrt_w,
            range_basis: pinv.basis.clone(),
            range_values: pinv.values.clone(),
            range_tol: tol.range_tol,
            pinv_cutoff: tol.pinv_cutoff,
        };
        if !eliminated {
            let (bn, _) = g.quad(&g.orth(b)?);
            g.trace.push(GramTracePoint {
                estimation_degree: n,
                b_norm_sq: bn,
            });
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.range_values.len()
    }

    /// Orthonormal coordinates of `f`, which must have degree at most `n`.
    pub fn orth(&self, f: &Poly) -> Result<CVec> {
        if f.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: f.dim(),
            });
        }
        if f.degree_or_zero() > self.degree {
            return Err(Error::InvalidInput(format!(
                "polynomial of degree {} exceeds the truncation degree {}",
                f.degree_or_zero(),
                self.degree
            )));
        }
        Ok(orth_coords(f, &self.basis))
    }

    /// `(v̄ S⁺ v, relative residual of v outside ran S)`.
    fn quad(&self, v: &CVec) -> (f64, f64) {
        let coords = self.range_basis.adjoint() * v;
        let value = coords
            .iter()
            .zip(&self.range_values)
            .map(|(x, l)| x.norm_sqr() / l)
            .sum();
        let vn = v.norm();
        let res = if vn == 0.0 {
            0.0
        } else {
            (v - &self.range_basis * &coords).norm() / vn
        };
        (value, res)
    }

    /// `‖f‖²_b` estimate, `+∞` when `f` is outside the estimated range.
    pub fn norm_sq(&self, f: &Poly) -> Result<f64> {
        let (v, res) = self.quad(&self.orth(f)?);
        Ok(if res <= self.range_tol {
            v
        } else {
            f64::INFINITY
        })
    }

    pub fn contains(&self, f: &Poly) -> Result<bool> {
        let (_, res) = self.quad(&self.orth(f)?);
        Ok(res <= self.range_tol)
    }

    /// `⟨f, g⟩_b`, linear in `f`.
    pub fn inner(&self, f: &Poly, g: &Poly) -> Result<Complex64> {
        let (vf, vg) = (self.orth(f)?, self.orth(g)?);
        let cf = self.range_basis.adjoint() * vf;
        let cg = self.range_basis.adjoint() * vg;
        Ok(cf
            .iter()
            .zip(cg.iter())
            .zip(&self.range_values)
            .map(|((x, y), l)| x * y.conj() / l)
            .sum())
    }

    /// Gram matrix `G` in monomial coordinates on `P_k`: `⟨f, g⟩_b = gᴴ G f`.
    pub fn gram_monomial(&self, k: usize) -> CMat {
        let len = basis_len(self.d, k.min(self.degree));
        let u = self.range_basis.rows(0, self.len());
        let mut scaled = u.clone_owned();
        for (j, l) in self.range_values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(1.0 / l);
        }
        let g = scaled * u.adjoint();
        CMat::from_fn(len, len, |r, col| {
            g[(r, col)] * (self.sqrt_w[r] * self.sqrt_w[col])
        })
    }

    /// Monomial coefficient vectors `Φ` of an `H(b)`-orthonormal basis of the
    /// estimated range, so that `Φᴴ G Φ = I`.
    pub fn model_basis(&self) -> CMat {
        let mut phi = self.range_basis.clone();
        for (j, l) in self.range_values.iter().enumerate() {
            phi.column_mut(j).scale_mut(l.sqrt());
        }
        for r in 0..phi.nrows() {
            let s = 1.0 / self.sqrt_w[r];
            phi.row_mut(r).scale_mut(s);
        }
        phi
    }

    /// Like [`HbGram::model_basis`] for the subspace `P_k`, `k ≤ n`: columns
    /// are monomial coefficients of an `H(b)`-orthonormal basis of `P_k`
    /// modulo the null directions of its Gram block.
    pub fn model_basis_at(&self, k: usize) -> CMat {
        if k >= self.degree {
            return self.model_basis();
        }
        let len = basis_len(self.d, k);
        let u = self.range_basis.rows(0, len);
        let mut scaled = u.clone_owned();
        for (j, l) in self.range_values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(1.0 / l);
        }
        let mut g = scaled * u.adjoint();
        hermitize(&mut g);
        let eig = HermitianEigen::new(&g);
        let top = eig.values.last().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..len)
            .filter(|&i| eig.values[i] > top * self.pinv_cutoff)
            .collect();
        CMat::from_fn(len, keep.len(), |r, c| {
            eig.vectors[(r, keep[c])] / (eig.values[keep[c]].sqrt() * self.sqrt_w[r])
        })
    }

    /// `R` with `RᴴR = G` on `P_k` (monomial coordinates).
    pub fn gram_factor(&self, k: usize) -> CMat {
        let len = basis_len(self.d, k.min(self.degree));
        let u = self.range_basis.rows(0, len);
        let mut r = u.adjoint();
        for (i, l) in self.range_values.iter().enumerate() {
            r.row_mut(i).scale_mut(1.0 / l.sqrt());
        }
        for c in 0..len {
            r.column_mut(c).scale_mut(self.sqrt_w[c]);
        }
        r
    }

    pub fn b_norm_trace(&self) -> Vec<GramTracePoint> {
        self.trace.clone()
    }
}

fn orth_coords(f: &Poly, basis: &Basis) -> CVec {
    let v = f.to_basis_vector(basis);
    CVec::from_iterator(
        v.len(),
        v.iter().zip(&basis.weights).map(|(x, w)| x * w.sqrt()),
    )
}

fn quad_inverse(s: &CMat, v: &CVec) -> Option<f64> {
    let ch = Cholesky::new(s.clone())?;
    let x = ch.solve(v);
    Some(v.dotc(&x).re)
}

/// Screening outcome for an input symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub multiplier_norm_lower: f64,
    pub kernel_min_eig: f64,
    pub kernel_trace: f64,
}

/// Extra degrees carried by the context Gram beyond the truncation degree.
///
/// In several variables the minimal-norm Gleason solution of a degree-`N`
/// polynomial is not confined to `P_{N-1}`; its components above that
/// degree decay by roughly three orders of magnitude per degree of `b`, so
/// `4 deg b` extra degrees keep the Gleason operators exact to rounding on
/// `P_N`. In one variable the backward shift needs no margin.
pub fn gram_margin(b: &Poly) -> usize {
    if b.dim() == 1 {
        0
    } else {
        4 * b.degree_or_zero()
    }
}

/// Immutable bundle of a symbol, its truncation degree, a node set and the
/// derived Gram data.
pub struct HbContext {
    pub b: Poly,
    pub degree: usize,
    pub nodes: NodeSet,
    pub tol: Tolerances,
    pub gram: HbGram,
    pub kernel: NodeKernel,
    pub screening: Screening,
}

impl HbContext {
    /// Rejects constant symbols.
    pub fn new(b: &Poly, degree: usize, nodes: NodeSet, tol: Tolerances) -> Result<Self> {
        if b.is_constant() {
            return Err(Error::ConstantSymbol);
        }
        Self::build(b, degree, nodes, tol)
    }

    /// Allows constant symbols; only a few operations accept such a context.
    pub fn new_degenerate(
        b: &Poly,
        degree: usize,
        nodes: NodeSet,
        tol: Tolerances,
    ) -> Result<Self> {
        Self::build(b, degree, nodes, tol)
    }

    /// Context with `count` seeded nodes in the ball of radius `radius`.
    pub fn with_seed(
        b: &Poly,
        degree: usize,
        count: usize,
        seed: u64,
        radius: f64,
    ) -> Result<Self> {
        let tol = Tolerances::default();
        let nodes =
            NodeSet::sample_avoiding(b.dim(), count, seed, radius, Some(b), tol.herglotz_guard)?;
        Self::new(b, degree, nodes, tol)
    }

    fn build(b: &Poly, degree: usize, nodes: NodeSet, tol: Tolerances) -> Result<Self> {
        if nodes.d != b.dim() {
            return Err(Error::DimensionMismatch {
                expected: b.dim(),
                found: nodes.d,
            });
        }
        let deg_b = b.degree_or_zero();
        if degree < deg_b.max(1) {
            return Err(Error::InvalidInput(format!(
                "truncation degree {degree} is below deg b = {deg_b}"
            )));
        }
        let norm_lower = multiplier_norm_lower(b, degree);
        if norm_lower > 1.0 + tol.contractivity_tol {
            return Err(Error::NotContractive(format!(
                "multiplier norm is at least {norm_lower:.9}"
            )));
        }
        let kernel = NodeKernel::new(b, &nodes, &tol)?;
        let gram = HbGram::estimate(b, degree + gram_margin(b), &tol)?;
        let screening = Screening {
            multiplier_norm_lower: norm_lower,
            kernel_min_eig: kernel.min_eig,
            kernel_trace: trace_re(&kernel.matrix),
        };
        Ok(HbContext {
            b: b.clone(),
            degree,
            nodes,
            tol,
            gram,
            kernel,
            screening,
        })
    }

    pub fn d(&self) -> usize {
        self.b.dim()
    }

    pub fn b0(&self) -> Complex64 {
        self.b.constant_term()
    }
}

/// The screened node kernel matrix of the context.
pub fn kernel_matrix(ctx: &HbContext) -> &CMat {
    &ctx.kernel.matrix
}

/// Node estimate of `‖f‖²_b` on the context's nodes.
pub fn membership_score(ctx: &HbContext, f: &Poly) -> Score {
    ctx.kernel.score(f)
}

/// Truncation estimate of `‖f‖²_b` for `f` of degree at most the context degree.
pub fn hb_norm_trunc(ctx: &HbContext, f: &Poly) -> Result<f64> {
    ctx.gram.norm_sq(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    QuasiExtreme,
    NotQuasiExtreme,
    Inconclusive,
}

/// Evidence behind a verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictEvidence {
    pub verdict: Verdict,
    /// Scores of `b`: `b ∈ H(b)` exactly when `b` is not quasi-extreme.
    pub b_trace: ScoreTrace,
    /// Scores of `1 - b`, which lies in `H(b)` exactly when the constants lie
    /// in the Herglotz space `L(b)`.
    pub one_minus_b_trace: ScoreTrace,
    pub min_defect: f64,
    pub defect_tol: f64,
    /// Truncation estimate of `‖b‖²_b` (`+∞` outside the range).
    #[serde(with = "crate::report::extended_real")]
    pub b_norm_sq_trunc: f64,
    /// `true` unless a node score exceeds the truncation estimate by more
    /// than `cross_tol` (node scores are lower bounds).
    pub cross_check_ok: bool,
    pub notes: Vec<String>,
}

/// Decides quasi-extremity from the score traces of `b` and `1 - b` and the
/// minimal defect of admissible tuples.
pub fn qe_verdict(ctx: &HbContext, schedule: &Schedule) -> Result<VerdictEvidence> {
    if ctx.b.is_constant() {
        return Err(Error::ConstantSymbol);
    }
    let tol = &ctx.tol;
    let kernels = schedule_kernels(&ctx.b, schedule, tol)?;
    let one = Poly::constant(ctx.d(), Complex64::one());
    let omb = &one - &ctx.b;
    let b_trace = trace_from_kernels(&kernels, &ctx.b, "b", tol);
    let omb_trace = trace_from_kernels(&kernels, &omb, "1-b", tol);
    let tuple = crate::gleason::solve_min_defect(ctx)?;
    let min_defect = tuple.defect;
    let b_norm = ctx.gram.norm_sq(&ctx.b)?;
    let mut notes = Vec::new();
    let mut cross_ok = true;
    if let (Some(last), true) = (b_trace.scores.last(), b_norm.is_finite()) {
        if last.is_finite() && last.value > b_norm * (1.0 + tol.cross_tol) {
            cross_ok = false;
            notes.push(format!(
                "node score {:.6} exceeds truncation estimate {:.6}",
                last.value, b_norm
            ));
        } else if last.is_finite() && last.value < b_norm * (1.0 - tol.cross_tol) {
            notes.push(format!(
                "node score {:.6} is still below the truncation estimate {:.6}; boundary-layer nodes closer to the sphere tighten it",
                last.value, b_norm
            ));
        }
    }
    let plateau = b_trace.class == TraceClass::Plateau && omb_trace.class == TraceClass::Plateau;
    let diverge = b_trace.class == TraceClass::Diverge && omb_trace.class == TraceClass::Diverge;
    let verdict = if !cross_ok {
        Verdict::Inconclusive
    } else if plateau && min_defect > tol.defect_tol {
        Verdict::NotQuasiExtreme
    } else if diverge && min_defect <= tol.defect_tol {
        Verdict::QuasiExtreme
    } else {
        Verdict::Inconclusive
    };
    Ok(VerdictEvidence {
        verdict,
        b_trace,
        one_minus_b_trace: omb_trace,
        min_defect,
        defect_tol: tol.defect_tol,
        b_norm_sq_trunc: b_norm,
        cross_check_ok: cross_ok,
        notes,
    })
}
