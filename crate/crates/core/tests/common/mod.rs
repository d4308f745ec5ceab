//! Property checks shared by the invariant suite and the acceptance harness.
//! Each check runs a proptest runner pinned to the given seed.
#![allow(dead_code)]

use num_complex::Complex64;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

use qe_core::dbr::{
    hb_norm_trunc, herglotz_kernel_cayley, herglotz_kernel_eval, kb_eval, kernel_matrix_raw,
    HbContext, NodeKernel, NodeLayout, NodeSet, Schedule, Tolerances,
};
use qe_core::fock::{
    evaluation_lift, fock_shift, random_column_pair, symmetric_lift, symmetrize, truncated_norm,
    FockCoeffs,
};
use qe_core::gleason::{
    a0_from_hbnorm, canonical_tuple, defect_identity_residual, is_exact_zero, solve_min_defect,
    GleasonOperators,
};
use qe_core::hardy::{
    column_positivity, column_positivity_matrix, h2_inner, mult_adjoint_apply,
    multiplier_norm_lower,
};
use qe_core::index::{basis_len, multinomial, Basis, MultiIndex};
use qe_core::linalg::{hermitian_eigenvalues, op_norm, CMat};
use qe_core::onevar::{outer_a, szego_integral, DEFAULT_GRID};
use qe_core::realization::{
    build_a_colligation, construct_a, functional_model_colligation, isometry_residual,
    positivity_budget, positivity_profile, transfer_eval,
};
use qe_core::report::{cmd_report, ReportConfig};
use qe_core::Poly;

pub const SEEDS: [u64; 3] = [0x5eed_0001, 0x5eed_0002, 0x5eed_0003];

pub struct Invariant {
    pub module: &'static str,
    pub name: &'static str,
    pub check: fn(u64) -> Result<(), String>,
}

pub const ALL: &[Invariant] = &[
    Invariant {
        module: "index",
        name: "kernel_expansion",
        check: kernel_expansion,
    },
    Invariant {
        module: "index",
        name: "basis_order",
        check: basis_order,
    },
    Invariant {
        module: "index",
        name: "eval_multiplicative",
        check: eval_multiplicative,
    },
    Invariant {
        module: "hardy",
        name: "adjoint_identity",
        check: adjoint_identity,
    },
    Invariant {
        module: "hardy",
        name: "q_hermitian_psd",
        check: q_hermitian_psd,
    },
    Invariant {
        module: "hardy",
        name: "q_nested",
        check: q_nested,
    },
    Invariant {
        module: "dbr",
        name: "kernel_hermitian",
        check: kernel_hermitian,
    },
    Invariant {
        module: "dbr",
        name: "herglotz_formulas",
        check: herglotz_formulas,
    },
    Invariant {
        module: "dbr",
        name: "score_monotone",
        check: score_monotone,
    },
    Invariant {
        module: "dbr",
        name: "estimators_agree",
        check: estimators_agree,
    },
    Invariant {
        module: "dbr",
        name: "kernel_rank_one_for_z",
        check: kernel_rank_one_for_z,
    },
    Invariant {
        module: "gleason",
        name: "constraint_exact",
        check: constraint_exact,
    },
    Invariant {
        module: "gleason",
        name: "min_defect_optimal",
        check: min_defect_optimal,
    },
    Invariant {
        module: "gleason",
        name: "canonical_matches_min_defect",
        check: canonical_matches_min_defect,
    },
    Invariant {
        module: "gleason",
        name: "x_annihilates_constants",
        check: x_annihilates_constants,
    },
    Invariant {
        module: "gleason",
        name: "a0_formula",
        check: a0_formula,
    },
    Invariant {
        module: "realization",
        name: "functional_model_transfer",
        check: functional_model_transfer,
    },
    Invariant {
        module: "realization",
        name: "isometry_blocks",
        check: isometry_blocks,
    },
    Invariant {
        module: "realization",
        name: "a0_consistency",
        check: a0_consistency,
    },
    Invariant {
        module: "realization",
        name: "positivity",
        check: positivity,
    },
    Invariant {
        module: "onevar",
        name: "szego_normalization",
        check: szego_normalization,
    },
    Invariant {
        module: "onevar",
        name: "modulus_on_circle",
        check: modulus_on_circle,
    },
    Invariant {
        module: "onevar",
        name: "pipeline_equality",
        check: pipeline_equality,
    },
    Invariant {
        module: "fock",
        name: "symmetric_lift_roundtrip",
        check: symmetric_lift_roundtrip,
    },
    Invariant {
        module: "fock",
        name: "shift_preserves_contractivity",
        check: shift_preserves_contractivity,
    },
    Invariant {
        module: "fock",
        name: "lift_norm_shadow",
        check: lift_norm_shadow,
    },
    Invariant {
        module: "cli",
        name: "report_reproducible",
        check: report_reproducible,
    },
    Invariant {
        module: "cli",
        name: "report_residuals_trace_back",
        check: report_residuals_trace_back,
    },
];

fn run<S: Strategy>(
    seed: u64,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        max_shrink_iters: 64,
        ..Config::default()
    };
    TestRunner::new(config)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($fmt)+)));
        }
    };
}

fn lift<T>(r: qe_core::Result<T>) -> Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

fn cplx() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
}

/// A point of the open ball of radius `radius`.
fn point(d: usize, radius: f64) -> impl Strategy<Value = Vec<Complex64>> {
    (prop::collection::vec(cplx(), d), 0.0f64..1.0).prop_map(move |(v, t)| {
        let n = v
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
            .max(1e-12);
        v.iter().map(|z| z * (radius * t / n)).collect()
    })
}

fn poly(d: usize, max_degree: usize, max_terms: usize) -> impl Strategy<Value = Poly> {
    let basis = Basis::new(d, max_degree);
    let len = basis.len();
    prop::collection::vec((0..len, cplx()), 1..=max_terms).prop_map(move |terms| {
        Poly::from_terms(
            d,
            terms
                .into_iter()
                .map(|(i, c)| (basis.elems[i].0.clone(), c)),
        )
        .unwrap()
    })
}

/// Non-constant `b` with `Σ|b_α| = scale`; every such `b` is a contractive
/// multiplier when `scale ≤ 1`.
fn scaled_poly(
    d: usize,
    max_degree: usize,
    max_terms: usize,
    scale: std::ops::Range<f64>,
) -> impl Strategy<Value = Poly> {
    (poly(d, max_degree, max_terms), scale, cplx()).prop_map(move |(p, s, lin)| {
        let mut p = p;
        if p.is_constant() {
            p = &p + &Poly::monomial(MultiIndex::unit(d, 0), lin + Complex64::new(0.1, 0.0));
        }
        let n = p.l1_norm();
        p.scale(Complex64::new(s / n, 0.0))
    })
}

fn dim_and<S: Strategy, F: Fn(usize) -> S>(
    dims: std::ops::RangeInclusive<usize>,
    f: F,
) -> impl Strategy<Value = (usize, S::Value)> {
    dims.prop_flat_map(move |d| (Just(d), f(d)))
}

fn mat_close(a: &CMat, b: &CMat) -> f64 {
    op_norm(&(a - b))
}

// ---- index ----

fn kernel_expansion(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=3, |d| (point(d, 1.0), point(d, 1.0), 0usize..=6));
    run(seed, 64, s, |(d, (z, w, n))| {
        let basis = Basis::new(d, n);
        let lhs: Complex64 = basis
            .elems
            .iter()
            .filter(|a| a.degree() as usize == n)
            .map(|a| {
                let m = multinomial(a).to_f64().unwrap();
                let wc: Vec<Complex64> = w.iter().map(|x| x.conj()).collect();
                a.monomial(&z) * a.monomial(&wc) * m
            })
            .sum();
        let zw: Complex64 = z.iter().zip(&w).map(|(a, b)| a * b.conj()).sum();
        let rhs = zw.powu(n as u32);
        check!((lhs - rhs).norm() <= 1e-12, "n={n}: {lhs} vs {rhs}");
        Ok(())
    })
}

fn basis_order(seed: u64) -> Result<(), String> {
    run(seed, 24, (1usize..=3, 0usize..=8), |(d, n)| {
        let basis = Basis::new(d, n);
        let expected = (1..=d).fold(1usize, |acc, k| acc * (n + k) / k);
        check!(
            basis.len() == expected && basis_len(d, n) == expected,
            "d={d} n={n}: size {}",
            basis.len()
        );
        for (i, a) in basis.elems.iter().enumerate() {
            check!(a.degree() as usize <= n, "degree bound");
            check!(basis.position(a) == Some(i), "position of {a:?}");
            if i > 0 {
                let prev = &basis.elems[i - 1];
                check!(prev < a, "order {prev:?} !< {a:?}");
                check!(prev.degree() <= a.degree(), "grading {prev:?} {a:?}");
            }
        }
        Ok(())
    })
}

fn eval_multiplicative(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=3, |d| (poly(d, 5, 6), poly(d, 5, 6), point(d, 1.0)));
    run(seed, 64, s, |(_, (p, q, z))| {
        let lhs = (&p * &q).eval(&z);
        let rhs = p.eval(&z) * q.eval(&z);
        check!(
            (lhs - rhs).norm() <= 1e-12 * (1.0 + p.l1_norm() * q.l1_norm()),
            "{lhs} vs {rhs}"
        );
        Ok(())
    })
}

// ---- hardy ----

fn adjoint_identity(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=3, |d| (poly(d, 6, 5), poly(d, 6, 5), poly(d, 6, 5)));
    run(seed, 48, s, |(_, (b, f, g))| {
        let lhs = lift(h2_inner(&lift(mult_adjoint_apply(&b, &f))?, &g))?;
        let rhs = lift(h2_inner(&f, &(&b * &g)))?;
        let scale = 1.0 + b.l1_norm() * f.l1_norm() * g.l1_norm();
        check!((lhs - rhs).norm() <= 1e-12 * scale, "{lhs} vs {rhs}");
        Ok(())
    })
}

fn q_hermitian_psd(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=3, |d| (scaled_poly(d, 3, 4, 0.3..1.3), 0usize..=4));
    run(seed, 32, s, |(d, (b, n))| {
        let q = lift(column_positivity_matrix(&b, &Poly::zero(d), n))?;
        check!(mat_close(&q, &q.adjoint()) <= 1e-14, "Q not Hermitian");
        let lower = multiplier_norm_lower(&b, n + b.degree_or_zero());
        let lmin = hermitian_eigenvalues(&q)[0];
        check!(
            lower > 1.0 || lmin >= -1e-10,
            "norm bound {lower} but λ_min {lmin}"
        );
        Ok(())
    })
}

fn q_nested(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=3, |d| {
        (
            scaled_poly(d, 3, 4, 0.2..1.2),
            scaled_poly(d, 3, 4, 0.2..1.2),
            0usize..=3,
        )
    });
    run(seed, 32, s, |(_, (b, a, n))| {
        let lo = lift(column_positivity(&b, &a, n))?;
        let hi = lift(column_positivity(&b, &a, n + 1))?;
        check!(
            hi <= lo + 1e-10,
            "λ_min({}) = {hi} > λ_min({n}) = {lo}",
            n + 1
        );
        Ok(())
    })
}

// ---- dbr ----

fn kernel_hermitian(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=3, |d| {
        (
            scaled_poly(d, 3, 4, 0.1..0.9),
            point(d, 0.95),
            point(d, 0.95),
        )
    });
    run(seed, 64, s, |(_, (b, z, w))| {
        let k1 = lift(kb_eval(&b, &z, &w))?;
        let k2 = lift(kb_eval(&b, &w, &z))?.conj();
        check!(
            (k1 - k2).norm() <= 1e-12 * (1.0 + k1.norm()),
            "k_b: {k1} vs {k2}"
        );
        let h1 = lift(herglotz_kernel_eval(&b, &z, &w))?;
        let h2 = lift(herglotz_kernel_eval(&b, &w, &z))?.conj();
        check!(
            (h1 - h2).norm() <= 1e-12 * (1.0 + h1.norm()),
            "Herglotz: {h1} vs {h2}"
        );
        Ok(())
    })
}

fn herglotz_formulas(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=3, |d| {
        (
            scaled_poly(d, 3, 4, 0.1..0.9),
            point(d, 0.95),
            point(d, 0.95),
        )
    });
    run(seed, 64, s, |(_, (b, z, w))| {
        let h1 = lift(herglotz_kernel_eval(&b, &z, &w))?;
        let h2 = lift(herglotz_kernel_cayley(&b, &z, &w))?;
        check!(
            (h1 - h2).norm() <= 1e-10 * (1.0 + h1.norm()),
            "{h1} vs {h2}"
        );
        Ok(())
    })
}

fn score_monotone(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=2, |d| {
        (scaled_poly(d, 2, 3, 0.2..0.9), poly(d, 3, 4), any::<u64>())
    });
    run(seed, 20, s, |(d, (b, f, node_seed))| {
        let tol = Tolerances::default();
        let all = lift(NodeSet::sample(d, 20, node_seed, 0.9))?;
        let mut prev = 0.0f64;
        for k in 1..=20 {
            let v = lift(NodeKernel::new(&b, &all.prefix(k), &tol))?
                .score(&f)
                .value;
            check!(
                v >= prev - 1e-9 * (1.0 + prev.abs()),
                "score dropped from {prev} to {v} at {k} nodes"
            );
            prev = v;
        }
        Ok(())
    })
}

/// Node scores of `b` on boundary-layer nodes up to radius 0.999 and the
/// truncation estimate of `‖b‖²_b`. One variable gets up to 2048 nodes, two
/// get 512.
pub fn norm_estimates(ctx: &HbContext, seed: u64) -> qe_core::Result<(f64, f64)> {
    let schedule = Schedule {
        base: if ctx.b.dim() == 1 { 128 } else { 32 },
        stages: 5,
        seed,
        radius: 0.999,
        layout: NodeLayout::BoundaryLayers,
    };
    let trace = qe_core::dbr::score_trace(&ctx.b, &ctx.b, "b", &schedule, &ctx.tol)?;
    let node = trace.scores.last().map_or(f64::NAN, |s| s.value);
    Ok((hb_norm_trunc(ctx, &ctx.b)?, node))
}

pub fn non_qe_fixtures() -> Vec<Poly> {
    let c = |x: f64| Complex64::new(x, 0.0);
    vec![
        Poly::univariate(&[0.5, 0.5]),
        Poly::univariate(&[0.0, 0.5]),
        Poly::from_terms(2, [(vec![1, 0], c(0.5)), (vec![0, 2], c(0.25))]).unwrap(),
        Poly::from_terms(2, [(vec![0, 0], c(0.2)), (vec![1, 1], c(0.6))]).unwrap(),
    ]
}

fn fixture_degree(b: &Poly) -> usize {
    if b.dim() == 1 {
        20
    } else {
        12
    }
}

fn estimators_agree(seed: u64) -> Result<(), String> {
    run(seed, 1, any::<u64>(), |node_seed| {
        for b in non_qe_fixtures() {
            let ctx = lift(HbContext::with_seed(&b, fixture_degree(&b), 16, 42, 0.9))?;
            let (trunc, node) = lift(norm_estimates(&ctx, node_seed))?;
            check!(
                (trunc - node).abs() <= 0.01 * trunc,
                "{b:?}: truncation {trunc} vs nodes {node}"
            );
        }
        Ok(())
    })
}

fn kernel_rank_one_for_z(seed: u64) -> Result<(), String> {
    run(
        seed,
        16,
        (1usize..=24, any::<u64>()),
        |(count, node_seed)| {
            let nodes = lift(NodeSet::sample(1, count, node_seed, 0.95))?;
            let k = kernel_matrix_raw(&Poly::coordinate(1, 0), &nodes);
            let sv = k.singular_values();
            let top = sv.max();
            let rest = sv
                .iter()
                .filter(|&&s| s < top)
                .fold(0.0f64, |m, &s| m.max(s));
            check!(
                sv.len() == 1 || rest <= 1e-10 * top,
                "σ2/σ1 = {}",
                rest / top
            );
            Ok(())
        },
    )
}

// ---- gleason ----

/// Random strict contractions are never quasi-extreme.
fn strict_contraction() -> impl Strategy<Value = Poly> {
    dim_and(1..=2, |d| scaled_poly(d, 2, 3, 0.3..0.85)).prop_map(|(_, b)| b)
}

fn small_ctx(b: &Poly) -> qe_core::Result<HbContext> {
    let n = if b.dim() == 1 { 10 } else { 6 };
    HbContext::with_seed(b, n, 16, 42, 0.9)
}

fn constraint_exact(seed: u64) -> Result<(), String> {
    run(seed, 6, strict_contraction(), |b| {
        let ctx = lift(small_ctx(&b))?;
        let t = lift(solve_min_defect(&ctx))?;
        let r = lift(t.constraint_residual_exact(&b))?;
        check!(is_exact_zero(&r), "residual {r}");
        Ok(())
    })
}

fn min_defect_optimal(seed: u64) -> Result<(), String> {
    let s = (
        scaled_poly(2, 2, 3, 0.3..0.85),
        prop::collection::vec(poly(2, 4, 3), 20),
        -1.0f64..1.0,
    );
    run(seed, 3, s, |(b, gs, eps)| {
        let ctx = lift(small_ctx(&b))?;
        let t = lift(solve_min_defect(&ctx))?;
        let base = 1.0 - b.constant_term().norm_sqr();
        let defect = |parts: &[Poly]| -> Result<f64, TestCaseError> {
            let mut s = base;
            for p in parts {
                s -= lift(ctx.gram.norm_sq(p))?;
            }
            Ok(s)
        };
        let best = defect(&t.b_js)?;
        for g in gs {
            // (z2 g, -z1 g) spans the null space of the Gleason constraint.
            let g = g.scale(Complex64::new(0.05 * eps, 0.0));
            let p1 = &t.b_js[0] + &g.shift(1);
            let p2 = &t.b_js[1] - &g.shift(0);
            // The solver minimizes the norm sum, so no perturbation may raise the defect.
            let other = defect(&[p1, p2])?;
            check!(
                other <= best + 1e-9,
                "perturbed defect {other} beats {best}"
            );
        }
        Ok(())
    })
}

fn canonical_matches_min_defect(seed: u64) -> Result<(), String> {
    run(seed, 4, strict_contraction(), |b| {
        let ctx = lift(small_ctx(&b))?;
        let t = lift(solve_min_defect(&ctx))?;
        let c = lift(canonical_tuple(&ctx))?;
        let tol = ctx.tol.cross_tol;
        check!(
            (t.defect - c.defect).abs() <= tol,
            "defects {} vs {}",
            t.defect,
            c.defect
        );
        for (p, q) in t.b_js.iter().zip(&c.b_js) {
            let gap = lift(ctx.gram.norm_sq(&(p - q)))?;
            check!(gap <= tol, "‖b_j - c_j‖²_b = {gap}");
        }
        Ok(())
    })
}

fn x_annihilates_constants(seed: u64) -> Result<(), String> {
    run(seed, 4, (strict_contraction(), cplx()), |(b, c0)| {
        let ctx = lift(small_ctx(&b))?;
        let t = lift(solve_min_defect(&ctx))?;
        let ops = lift(GleasonOperators::new(&ctx, &t))?;
        let one = Poly::constant(b.dim(), c0);
        for j in 0..b.dim() {
            let x = ops.apply_x(j, &one);
            let n = ops.inner(&x, &x).re.max(0.0).sqrt();
            check!(n <= 1e-9, "‖X_{j} c‖ = {n}");
        }
        Ok(())
    })
}

fn a0_formula(seed: u64) -> Result<(), String> {
    run(seed, 4, strict_contraction(), |b| {
        let ctx = lift(small_ctx(&b))?;
        let t = lift(solve_min_defect(&ctx))?;
        let f = lift(a0_from_hbnorm(&ctx))?;
        check!(
            (t.defect - f).abs() <= ctx.tol.cross_tol,
            "defect {} vs 1/(1+‖b‖²) = {f}",
            t.defect
        );
        Ok(())
    })
}

// ---- realization ----

fn functional_model_transfer(seed: u64) -> Result<(), String> {
    run(
        seed,
        4,
        (
            strict_contraction(),
            prop::collection::vec(point(2, 0.9), 8),
        ),
        |(b, pts)| {
            let ctx = lift(small_ctx(&b))?;
            let t = lift(solve_min_defect(&ctx))?;
            let ops = lift(GleasonOperators::new(&ctx, &t))?;
            let fm = lift(functional_model_colligation(&ops))?;
            for p in pts {
                let z = &p[..b.dim()];
                let s = lift(transfer_eval(&fm, z))?[0];
                check!(
                    (s - b.eval(z)).norm() <= 1e-8,
                    "S(z) = {s}, b(z) = {}",
                    b.eval(z)
                );
            }
            Ok(())
        },
    )
}

fn isometry_blocks(seed: u64) -> Result<(), String> {
    run(seed, 4, strict_contraction(), |b| {
        let ctx = lift(small_ctx(&b))?;
        let t = lift(solve_min_defect(&ctx))?;
        let cols = lift(build_a_colligation(&ctx, &t))?;
        let u = cols.u_tilde.block();
        let g = u.adjoint() * &u;
        let m = cols.u_tilde.state_dim();
        let top = g.view((0, 0), (m, m)).into_owned();
        let off = g.view((0, m), (m, 1)).into_owned();
        let corner = g[(m, m)];
        check!(
            mat_close(&top, &CMat::identity(m, m)) <= 1e-8,
            "(1,1) block"
        );
        check!(op_norm(&off) <= 1e-8, "(1,2) block {}", op_norm(&off));
        check!(
            (corner - Complex64::new(1.0, 0.0)).norm() <= 1e-8,
            "(2,2) entry {corner}"
        );
        check!(isometry_residual(&cols.u_tilde) <= 1e-8, "residual");
        Ok(())
    })
}

fn a0_consistency(seed: u64) -> Result<(), String> {
    run(seed, 4, strict_contraction(), |b| {
        let ctx = lift(small_ctx(&b))?;
        let c = lift(construct_a(&ctx, &Schedule::default(), 8))?;
        let tol = ctx.tol.cross_tol;
        let a0 = c.colligations.a0;
        let at_zero = lift(
            c.colligations
                .a_value(&vec![Complex64::new(0.0, 0.0); b.dim()]),
        )?;
        let from_norm = lift(a0_from_hbnorm(&ctx))?.sqrt();
        check!(
            (at_zero.re - a0).abs() <= tol && at_zero.im.abs() <= tol,
            "a(0) = {at_zero}, a0 = {a0}"
        );
        check!((c.a.constant_term().re - a0).abs() <= tol, "Taylor a(0)");
        check!((a0 - c.tuple.defect.sqrt()).abs() <= tol, "√defect");
        check!(
            (a0 - from_norm).abs() <= tol,
            "a0 = {a0}, formula {from_norm}"
        );
        Ok(())
    })
}

fn positivity(seed: u64) -> Result<(), String> {
    run(seed, 3, strict_contraction(), |b| {
        let ctx = lift(small_ctx(&b))?;
        let c = lift(construct_a(&ctx, &Schedule::default(), ctx.degree))?;
        let profile = lift(positivity_profile(&b, &c.a, positivity_budget(b.dim())))?;
        for p in profile {
            check!(p.min_eig >= -1e-6, "λ_min(Q_{}) = {}", p.degree, p.min_eig);
        }
        Ok(())
    })
}

// ---- onevar ----

/// `e^{iθ}(1 + e^{iφ}z)/2` (boundary zero of `a`) or a random strict contraction.
fn one_variable_fixture() -> impl Strategy<Value = Poly> {
    prop_oneof![
        (0.0f64..std::f64::consts::TAU, 0.0f64..std::f64::consts::TAU).prop_map(|(t, f)| {
            let u = Complex64::from_polar(0.5, t);
            Poly::from_terms(
                1,
                [(vec![0], u), (vec![1], u * Complex64::from_polar(1.0, f))],
            )
            .unwrap()
        }),
        scaled_poly(1, 4, 4, 0.2..0.9),
    ]
}

fn szego_normalization(seed: u64) -> Result<(), String> {
    run(seed, 16, one_variable_fixture(), |b| {
        let a = lift(outer_a(&b, DEFAULT_GRID))?;
        let s = lift(szego_integral(&b, DEFAULT_GRID))?;
        let a0 = a.constant_term();
        check!(a0.im.abs() <= 1e-12 && a0.re > 0.0, "a(0) = {a0}");
        check!(
            (2.0 * a0.re.ln() - s).abs() <= 1e-8,
            "2 log a(0) = {}, Szegő {s}",
            2.0 * a0.re.ln()
        );
        Ok(())
    })
}

fn modulus_on_circle(seed: u64) -> Result<(), String> {
    run(
        seed,
        16,
        (
            one_variable_fixture(),
            prop::collection::vec(0.0f64..std::f64::consts::TAU, 32),
        ),
        |(b, ts)| {
            let a = lift(outer_a(&b, DEFAULT_GRID))?;
            for t in ts {
                let z = [Complex64::from_polar(1.0, t)];
                let s = a.eval(&z).norm_sqr() + b.eval(&z).norm_sqr();
                check!((s - 1.0).abs() <= 1e-8, "|a|²+|b|² = {s} at angle {t}");
            }
            Ok(())
        },
    )
}

fn pipeline_equality(seed: u64) -> Result<(), String> {
    run(seed, 3, one_variable_fixture(), |b| {
        let ctx = lift(HbContext::with_seed(&b, 20, 16, 42, 0.9))?;
        let c = lift(construct_a(&ctx, &Schedule::default(), 10))?;
        let o = lift(outer_a(&b, DEFAULT_GRID))?.truncate(10);
        let gap = c.a.max_coeff_diff(&o);
        check!(gap <= 1e-6, "{b:?}: coefficient gap {gap}");
        Ok(())
    })
}

// ---- fock ----

fn symmetric_lift_roundtrip(seed: u64) -> Result<(), String> {
    let s = dim_and(1..=3, |d| poly(d, 4, 6));
    run(seed, 48, s, |(_, p)| {
        let exact = symmetrize(&lift(evaluation_lift(&p, 4))?);
        check!(exact == p, "evaluation lift: {exact:?} vs {p:?}");
        let sym = symmetrize(&lift(symmetric_lift(&p, 4))?);
        check!(
            sym.max_coeff_diff(&p) <= 1e-12,
            "symmetric lift gap {}",
            sym.max_coeff_diff(&p)
        );
        Ok(())
    })
}

fn shift_preserves_contractivity(seed: u64) -> Result<(), String> {
    // words up to length 2L in three letters make L = 5 far too large
    let s = (1usize..=3).prop_flat_map(|d| {
        (
            Just(d),
            2usize..=if d == 3 { 3 } else { 5 },
            1usize..=5,
            any::<u64>(),
        )
    });
    run(seed, 24, s, |(d, l, terms, pair_seed)| {
        let (b, a) = lift(random_column_pair(d, l, terms, pair_seed))?;
        let out = lift(fock_shift(&b, &a, l))?;
        check!(
            out.min_eig_after >= out.min_eig_before - 1e-10,
            "λ_min {} -> {}",
            out.min_eig_before,
            out.min_eig_after
        );
        check!(out.value_at_zero.norm() > 0.0, "Ã(0) = 0");
        Ok(())
    })
}

fn lift_norm_shadow(seed: u64) -> Result<(), String> {
    let s = (1usize..=2, 1usize..=3, 1usize..=4, any::<u64>());
    run(seed, 24, s, |(d, l, terms, pair_seed)| {
        let (f, _) = lift(random_column_pair(d, l, terms, pair_seed))?;
        let n = 3;
        let lower = multiplier_norm_lower(&symmetrize(&f), n);
        let upper = truncated_norm(&f, n);
        check!(
            lower <= upper + 1e-8,
            "multiplier bound {lower} above Fock norm {upper}"
        );
        Ok(())
    })
}

// ---- cli ----

fn quick_config(seed: u64) -> ReportConfig {
    ReportConfig {
        degree: 8,
        seed,
        ..Default::default()
    }
}

fn report_reproducible(seed: u64) -> Result<(), String> {
    run(
        seed,
        3,
        (scaled_poly(1, 2, 3, 0.3..0.85), any::<u64>()),
        |(b, s)| {
            let r1 = lift(cmd_report(&b, &quick_config(s)))?.to_json_pretty();
            let r2 = lift(cmd_report(&b, &quick_config(s)))?.to_json_pretty();
            check!(r1 == r2, "reports differ");
            Ok(())
        },
    )
}

fn report_residuals_trace_back(seed: u64) -> Result<(), String> {
    run(
        seed,
        3,
        (scaled_poly(1, 2, 3, 0.3..0.85), any::<u64>()),
        |(b, s)| {
            let config = quick_config(s);
            let r = lift(cmd_report(&b, &config))?;
            let ctx = lift(qe_core::report::context(&b, &config))?;
            let t = lift(solve_min_defect(&ctx))?;
            check!(r.defect == t.defect, "defect");
            check!(
                r.residuals.defect_identity
                    == lift(defect_identity_residual(&b, &t, &ctx.nodes, None))?,
                "defect identity"
            );
            let cols = lift(build_a_colligation(&ctx, &t))?;
            check!(
                r.residuals.isometry == Some(isometry_residual(&cols.u_tilde)),
                "isometry"
            );
            let a0_hb = lift(a0_from_hbnorm(&ctx))?;
            check!(r.a0_sq_from_hb_norm == Some(a0_hb), "a0 formula");
            let sz = lift(szego_integral(&b, DEFAULT_GRID))?;
            check!(
                r.oracle.as_ref().map(|o| o.szego_integral) == Some(sz),
                "Szegő"
            );
            Ok(())
        },
    )
}

pub fn fock_from(d: usize, l: usize, terms: &[(&[u8], f64)]) -> FockCoeffs {
    FockCoeffs::from_terms(
        d,
        l,
        terms
            .iter()
            .map(|(w, c)| (w.to_vec(), Complex64::new(*c, 0.0))),
    )
    .unwrap()
}
