//! Report assembly for the command-line and browser frontends.

/// Serde adapter for reals that may be `+∞`: finite values are numbers,
/// infinities are the strings `"inf"` / `"-inf"`, NaN is `null`.
pub mod extended_real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Num(f64),
        Text(String),
        Null(()),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_none()
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Option::<Wire>::deserialize(d)? {
            Some(Wire::Num(x)) => Ok(x),
            Some(Wire::Text(t)) if t == "inf" => Ok(f64::INFINITY),
            Some(Wire::Text(t)) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Some(Wire::Text(t)) => Err(serde::de::Error::custom(format!("bad real '{t}'"))),
            Some(Wire::Null(())) | None => Ok(f64::NAN),
        }
    }
}

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dbr::{
    qe_verdict, GramTracePoint, HbContext, NodeLayout, NodeSet, Schedule, Screening, Tolerances,
    Verdict, VerdictEvidence,
};
use crate::error::{Error, Result};
use crate::fock::{fock_shift, FockCoeffs, FockCoeffsJson};
use crate::gleason::{a0_from_hbnorm, defect_identity_residual, solve_min_defect};
use crate::index::{Poly, PolyJson};
use crate::onevar::{outer_a, sarason_coeff_check, szego_integral, SarasonTable, DEFAULT_GRID};
use crate::realization::{construct_a_from_evidence, Certificate};

pub const SCHEMA: &str = "qe-report/1";

/// Inputs of a report run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportConfig {
    pub degree: usize,
    pub nodes: usize,
    pub stages: usize,
    pub seed: u64,
    pub radius: f64,
    /// Node layout of the verdict schedule.
    #[serde(default)]
    pub layout: NodeLayout,
    /// Taylor degree of the reported `a`.
    pub a_degree: usize,
    pub tol: Tolerances,
    #[serde(skip)]
    pub timing: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            degree: 20,
            nodes: 16,
            stages: 5,
            seed: 42,
            radius: 0.9,
            layout: NodeLayout::Uniform,
            a_degree: 12,
            tol: Tolerances::default(),
            timing: false,
        }
    }
}

impl ReportConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            base: self.nodes,
            stages: self.stages,
            seed: self.seed,
            radius: self.radius,
            layout: self.layout,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportInput {
    pub b: PolyJson,
    pub config: ReportConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GramSummary {
    pub estimation_degree: usize,
    pub converged: bool,
    pub eliminated: bool,
    pub rank: usize,
    pub b_norm_trace: Vec<GramTracePoint>,
}

/// Comparison against the one-variable outer function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSummary {
    #[serde(with = "extended_real")]
    pub szego_integral: f64,
    pub outer_a: Option<PolyJson>,
    /// Largest coefficient gap between the constructed `a` and the oracle.
    pub max_coeff_diff: Option<f64>,
    pub sarason: Option<SarasonTable>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Residuals {
    pub isometry: Option<f64>,
    pub defect_identity: f64,
    pub positivity_min_eig: Option<f64>,
    /// `|defect - 1/(1 + ‖b‖²_b)|`, absent when `b ∉ H(b)`.
    pub a0_formula: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Runtime {
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub kind: String,
    pub input: ReportInput,
    pub screening: Screening,
    pub gram: GramSummary,
    pub verdict: Verdict,
    pub evidence: VerdictEvidence,
    pub tuple: Vec<PolyJson>,
    pub defect: f64,
    /// `+√defect` when positive.
    pub a0: Option<f64>,
    /// `1/(1 + ‖b‖²_b)`, absent when `b ∉ H(b)`.
    pub a0_sq_from_hb_norm: Option<f64>,
    pub a: Option<PolyJson>,
    pub certificate: Option<Certificate>,
    pub residuals: Residuals,
    pub oracle: Option<OracleSummary>,
    pub seed: u64,
    pub errors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtime: Option<Runtime>,
}

impl Report {
    /// 0 on a decided verdict, 2 on an inconclusive one, 1 if a stage failed.
    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            1
        } else if self.verdict == Verdict::Inconclusive {
            2
        } else {
            0
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Builds the context for `b` under `config`.
pub fn context(b: &Poly, config: &ReportConfig) -> Result<HbContext> {
    let nodes = NodeSet::sample_avoiding(
        b.dim(),
        config.nodes,
        config.seed,
        config.radius,
        Some(b),
        config.tol.herglotz_guard,
    )?;
    HbContext::new(b, config.degree, nodes, config.tol.clone())
}

/// Verdict, tuple, construction of `a`, residuals and, in one variable, the
/// outer-function comparison.
pub fn cmd_report(b: &Poly, config: &ReportConfig) -> Result<Report> {
    let start = config.timing.then(Instant::now);
    let ctx = context(b, config)?;
    let evidence = qe_verdict(&ctx, &config.schedule())?;
    let tuple = solve_min_defect(&ctx)?;
    let defect_identity = defect_identity_residual(b, &tuple, &ctx.nodes, None)?;
    let a0_hb = a0_from_hbnorm(&ctx).ok();
    let mut errors = Vec::new();
    let (a, certificate) = if evidence.verdict == Verdict::NotQuasiExtreme {
        match construct_a_from_evidence(&ctx, evidence.clone(), config.a_degree) {
            Ok(c) => (Some(c.a), Some(c.certificate)),
            Err(e) => {
                errors.push(format!("construction of a failed: {e}"));
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    let oracle = if b.dim() == 1 {
        Some(oracle_summary(&ctx, a.as_ref()))
    } else {
        None
    };
    let residuals = Residuals {
        isometry: certificate.as_ref().map(|c| c.iso_residual),
        defect_identity,
        positivity_min_eig: certificate.as_ref().map(|c| c.positivity_min_eig),
        a0_formula: a0_hb.map(|v| (tuple.defect - v).abs()),
    };
    let gram = GramSummary {
        estimation_degree: ctx.gram.estimation_degree,
        converged: ctx.gram.converged,
        eliminated: ctx.gram.eliminated,
        rank: ctx.gram.rank(),
        b_norm_trace: ctx.gram.b_norm_trace(),
    };
    Ok(Report {
        schema: SCHEMA.into(),
        kind: "report".into(),
        input: ReportInput {
            b: PolyJson::from(b),
            config: config.clone(),
        },
        screening: ctx.screening.clone(),
        gram,
        verdict: evidence.verdict,
        evidence,
        tuple: tuple.b_js.iter().map(PolyJson::from).collect(),
        defect: tuple.defect,
        a0: (tuple.defect > config.tol.defect_tol).then(|| tuple.defect.sqrt()),
        a0_sq_from_hb_norm: a0_hb,
        a: a.as_ref().map(PolyJson::from),
        certificate,
        residuals,
        oracle,
        seed: config.seed,
        errors,
        runtime: start.map(|t| Runtime {
            seconds: t.elapsed().as_secs_f64(),
        }),
    })
}

fn oracle_summary(ctx: &HbContext, a: Option<&Poly>) -> OracleSummary {
    let b = &ctx.b;
    let mut notes = Vec::new();
    let szego = match szego_integral(b, DEFAULT_GRID) {
        Ok(v) => v,
        Err(e) => {
            notes.push(format!("Szegő integral: {e}"));
            f64::NAN
        }
    };
    let outer = match outer_a(b, DEFAULT_GRID) {
        Ok(p) => Some(p),
        Err(e) => {
            notes.push(format!("outer function: {e}"));
            None
        }
    };
    let max_coeff_diff = match (a, &outer) {
        (Some(a), Some(o)) => {
            let deg = a.degree_or_zero() as u32;
            Some(a.max_coeff_diff(&o.truncate(deg)))
        }
        _ => None,
    };
    let sarason = if outer.is_some() {
        match sarason_coeff_check(ctx, 8) {
            Ok(t) => Some(t),
            Err(e) => {
                notes.push(format!("coefficient check: {e}"));
                None
            }
        }
    } else {
        None
    };
    OracleSummary {
        szego_integral: szego,
        outer_a: outer
            .as_ref()
            .map(|p| PolyJson::from(&p.truncate(ctx.degree as u32))),
        max_coeff_diff,
        sarason,
        notes,
    }
}

fn fmt_c(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.9}", z.re)
    } else {
        format!("{:.9}{:+.9}i", z.re, z.im)
    }
}

/// Coefficients below `1e-12` in modulus are omitted.
fn fmt_poly(p: &PolyJson) -> String {
    let terms: Vec<_> = p
        .coeffs
        .iter()
        .filter(|c| c.re.hypot(c.im) >= 1e-12)
        .collect();
    if terms.is_empty() {
        return "0".into();
    }
    terms
        .into_iter()
        .map(|c| {
            let alpha = c
                .alpha
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(",");
            format!("({}) z^[{alpha}]", fmt_c(Complex64::new(c.re, c.im)))
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3e}"))
}

/// Plain-text rendering of a report.
pub fn render_text(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "schema        {}", r.schema);
    let _ = writeln!(s, "b             {}", fmt_poly(&r.input.b));
    let c = &r.input.config;
    let _ = writeln!(
        s,
        "config        degree {} nodes {}x{} seed {} radius {} layout {:?}",
        c.degree, c.nodes, c.stages, c.seed, c.radius, c.layout
    );
    let _ = writeln!(s, "verdict       {:?}", r.verdict);
    for t in [&r.evidence.b_trace, &r.evidence.one_minus_b_trace] {
        let scores: Vec<String> = t.scores.iter().map(|x| format!("{:.6}", x.value)).collect();
        let _ = writeln!(
            s,
            "trace {:<7} {:?} [{}]",
            t.function,
            t.class,
            scores.join(", ")
        );
    }
    for n in &r.evidence.notes {
        let _ = writeln!(s, "note          {n}");
    }
    let _ = writeln!(s, "|b|_b^2       {:.9}", r.evidence.b_norm_sq_trunc);
    let _ = writeln!(s, "defect        {:.9}", r.defect);
    let _ = writeln!(
        s,
        "a0            {}",
        r.a0.map_or_else(|| "none".into(), |v| format!("{v:.9}"))
    );
    for (j, p) in r.tuple.iter().enumerate() {
        let _ = writeln!(s, "b_{}           {}", j + 1, fmt_poly(p));
    }
    if let Some(a) = &r.a {
        let _ = writeln!(s, "a             {}", fmt_poly(a));
    }
    let _ = writeln!(s, "isometry      {}", fmt_opt(r.residuals.isometry));
    let _ = writeln!(s, "defect ident  {:.3e}", r.residuals.defect_identity);
    let _ = writeln!(
        s,
        "positivity    {}",
        fmt_opt(r.residuals.positivity_min_eig)
    );
    let _ = writeln!(s, "a0 formula    {}", fmt_opt(r.residuals.a0_formula));
    if let Some(o) = &r.oracle {
        let _ = writeln!(s, "szego         {:.9}", o.szego_integral);
        let _ = writeln!(s, "oracle diff   {}", fmt_opt(o.max_coeff_diff));
        if let Some(t) = &o.sarason {
            let _ = writeln!(s, "sarason       {:.3e}", t.max_residual());
        }
    }
    for e in &r.errors {
        let _ = writeln!(s, "error         {e}");
    }
    if let Some(t) = &r.runtime {
        let _ = writeln!(s, "runtime       {:.3} s", t.seconds);
    }
    s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FockShiftInput {
    pub a: FockCoeffsJson,
    pub b: FockCoeffsJson,
    #[serde(rename = "L")]
    pub l: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FockShiftReport {
    pub schema: String,
    pub kind: String,
    pub input: FockShiftInput,
    pub v: Vec<u8>,
    pub a_shifted: FockCoeffsJson,
    pub symmetrized: PolyJson,
    pub value_at_zero: [f64; 2],
    pub min_eig_before: f64,
    pub min_eig_after: f64,
    pub length_before: usize,
    pub length_after: usize,
}

/// Minimal-word shift of `A` with the column check against `B` at
/// truncation `l` (default: the larger of the two `L`).
pub fn cmd_fock_shift(a: &FockCoeffs, b: &FockCoeffs, l: Option<usize>) -> Result<FockShiftReport> {
    if a.d != b.d {
        return Err(Error::DimensionMismatch {
            expected: a.d,
            found: b.d,
        });
    }
    let l = l.unwrap_or(a.l.max(b.l));
    let out = fock_shift(b, a, l)?;
    Ok(FockShiftReport {
        schema: SCHEMA.into(),
        kind: "fock-shift".into(),
        input: FockShiftInput {
            a: a.to_json(),
            b: b.to_json(),
            l,
        },
        v: out.v.0.clone(),
        a_shifted: out.a_shifted.to_json(),
        symmetrized: PolyJson::from(&out.symmetrized),
        value_at_zero: [out.value_at_zero.re, out.value_at_zero.im],
        min_eig_before: out.min_eig_before,
        min_eig_after: out.min_eig_after,
        length_before: out.length_before,
        length_after: out.length_after,
    })
}

pub fn render_fock_text(r: &FockShiftReport) -> String {
    let mut s = String::new();
    let v: Vec<String> = r.v.iter().map(|l| l.to_string()).collect();
    let _ = writeln!(s, "schema        {}", r.schema);
    let _ = writeln!(s, "v             ({})", v.join(","));
    let _ = writeln!(s, "lambda(A~)    {}", fmt_poly(&r.symmetrized));
    let _ = writeln!(
        s,
        "A~(0)         {}",
        fmt_c(Complex64::new(r.value_at_zero[0], r.value_at_zero[1]))
    );
    let _ = writeln!(
        s,
        "min eig       {:.3e} (L = {})",
        r.min_eig_before, r.length_before
    );
    let _ = writeln!(
        s,
        "min eig after {:.3e} (L = {})",
        r.min_eig_after, r.length_after
    );
    s
}
