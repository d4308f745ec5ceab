//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes and returns JSON strings. The plain `*_json` functions
//! carry the logic and are what the native tests call.

use std::f64::consts::TAU;

use num_complex::Complex64;
use qe_core::dbr::{HbContext, Schedule};
use qe_core::index::PolyJson;
use qe_core::onevar::{outer_a, szego_integral, DEFAULT_GRID};
use qe_core::realization::{construct_a, positivity_profile, PositivityPoint};
use qe_core::report::{cmd_report, render_text, ReportConfig};
use qe_core::{MultiIndex, Poly};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Largest truncation degree accepted from the page in one variable and in
/// several; keeps a click under a few seconds.
const MAX_DEGREE: usize = 24;
const MAX_DEGREE_MULTI: usize = 12;

#[derive(Deserialize)]
struct ReportRequest {
    b: PolyJson,
    #[serde(default)]
    degree: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ReportReply {
    verdict: String,
    exit_code: i32,
    text: String,
    report: serde_json::Value,
}

#[derive(Serialize)]
struct OuterReply {
    a: Vec<[f64; 2]>,
    szego: Option<f64>,
    theta: Vec<f64>,
    b_sq: Vec<f64>,
    a_sq: Vec<f64>,
}

#[derive(Serialize)]
struct PositivityReply {
    a: PolyJson,
    profile: Vec<PositivityPoint>,
}

fn parse_poly(json: &str) -> Result<Poly, String> {
    Poly::from_json_str(json).map_err(|e| e.to_string())
}

fn capped(b: &Poly, degree: Option<usize>) -> Result<usize, String> {
    let (fallback, max) = if b.dim() == 1 {
        (20, MAX_DEGREE)
    } else {
        (10, MAX_DEGREE_MULTI)
    };
    let n = degree.unwrap_or(fallback);
    if n > max {
        return Err(format!("degree {n} exceeds the demo limit {max}"));
    }
    Ok(n)
}

/// Full report: verdict, Gleason tuple, `a` and residuals.
pub fn report_json(request: &str) -> Result<String, String> {
    let req: ReportRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let b = Poly::try_from(req.b).map_err(|e| e.to_string())?;
    let mut config = ReportConfig::default();
    config.degree = capped(&b, req.degree)?;
    config.a_degree = config.degree.min(config.a_degree);
    if let Some(seed) = req.seed {
        config.seed = seed;
    }
    let report = cmd_report(&b, &config).map_err(|e| e.to_string())?;
    let reply = ReportReply {
        verdict: format!("{:?}", report.verdict),
        exit_code: report.exit_code(),
        text: render_text(&report),
        report: serde_json::to_value(&report).map_err(|e| e.to_string())?,
    };
    serde_json::to_string(&reply).map_err(|e| e.to_string())
}

/// One-variable outer function `a` with `|a|² = 1 - |b|²` on the circle,
/// sampled at `samples` boundary points for plotting.
pub fn outer_json(b: &str, samples: usize) -> Result<String, String> {
    let b = parse_poly(b)?;
    if b.dim() != 1 {
        return Err("the outer function is only available for d = 1".into());
    }
    let a = outer_a(&b, DEFAULT_GRID)
        .map_err(|e| e.to_string())?
        .truncate(MAX_DEGREE as u32);
    let szego = szego_integral(&b, DEFAULT_GRID)
        .ok()
        .filter(|s| s.is_finite());
    let samples = samples.clamp(8, 2048);
    let theta: Vec<f64> = (0..samples)
        .map(|k| TAU * k as f64 / samples as f64)
        .collect();
    let at = |p: &Poly, t: f64| p.eval(&[Complex64::from_polar(1.0, t)]).norm_sqr();
    let reply = OuterReply {
        a: (0..=a.degree_or_zero() as u32)
            .map(|k| {
                let c = a.coeff(&MultiIndex(vec![k]));
                [c.re, c.im]
            })
            .collect(),
        szego,
        b_sq: theta.iter().map(|&t| at(&b, t)).collect(),
        a_sq: theta.iter().map(|&t| at(&a, t)).collect(),
        theta,
    };
    serde_json::to_string(&reply).map_err(|e| e.to_string())
}

/// Constructs `a` at truncation degree `degree` and returns `λ_min` of the
/// column positivity matrix for every `N ≤ max_n`.
pub fn positivity_json(b: &str, degree: usize, max_n: usize) -> Result<String, String> {
    let b = parse_poly(b)?;
    let degree = capped(&b, Some(degree))?;
    let ctx = HbContext::with_seed(&b, degree, 16, 42, 0.9).map_err(|e| e.to_string())?;
    let built = construct_a(&ctx, &Schedule::default(), degree).map_err(|e| e.to_string())?;
    let profile =
        positivity_profile(&b, &built.a, max_n.min(MAX_DEGREE)).map_err(|e| e.to_string())?;
    let reply = PositivityReply {
        a: PolyJson::from(&built.a),
        profile,
    };
    serde_json::to_string(&reply).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn report(request: &str) -> Result<String, JsValue> {
    report_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn outer(b: &str, samples: usize) -> Result<String, JsValue> {
    outer_json(b, samples).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn positivity(b: &str, degree: usize, max_n: usize) -> Result<String, JsValue> {
    positivity_json(b, degree, max_n).map_err(|e| JsValue::from_str(&e))
}
