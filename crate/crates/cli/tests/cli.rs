use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qe"))
        .args(args)
        .output()
        .expect("qe runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

const HALF_ONE_PLUS_Z: &str =
    r#"{"d":1,"coeffs":[{"alpha":[0],"re":0.5,"im":0},{"alpha":[1],"re":0.5,"im":0}]}"#;

#[test]
fn report_constructs_a_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(dir.path(), "b.json", HALF_ONE_PLUS_Z);
    let first = qe(&["report", &b, "--degree", "12"]);
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let second = qe(&["report", &b, "--degree", "12"]);
    assert_eq!(first.stdout, second.stdout);

    let v = json(&first);
    assert_eq!(v["schema"], "qe-report/1");
    assert_eq!(v["verdict"], "NotQuasiExtreme");
    let coeffs = v["a"]["coeffs"].as_array().unwrap();
    let want = [0.5, -0.5];
    for c in coeffs {
        let k = c["alpha"][0].as_u64().unwrap() as usize;
        let target = want.get(k).copied().unwrap_or(0.0);
        assert!((c["re"].as_f64().unwrap() - target).abs() < 1e-6);
    }
    assert!(v["residuals"]["isometry"].as_f64().unwrap() < 1e-8);
    assert!(v["oracle"]["max_coeff_diff"].as_f64().unwrap() < 1e-6);
    assert!(v.get("runtime").is_none());
}

#[test]
fn out_flag_and_text_format() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(dir.path(), "b.json", HALF_ONE_PLUS_Z);
    let out = dir.path().join("r.txt");
    let o = qe(&[
        "report",
        &b,
        "--degree",
        "8",
        "--format",
        "text",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.contains("verdict       NotQuasiExtreme"));
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(dir.path(), "b.json", HALF_ONE_PLUS_Z);
    let v = json(&qe(&["report", &b, "--degree", "6", "--timing"]));
    assert!(v["runtime"]["seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn coordinate_is_quasi_extreme() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(
        dir.path(),
        "z.json",
        r#"{"d":1,"coeffs":[{"alpha":[1],"re":1,"im":0}]}"#,
    );
    let o = qe(&["report", &b, "--degree", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["verdict"], "QuasiExtreme");
    assert!(v["a"].is_null());
}

#[test]
fn single_stage_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(dir.path(), "b.json", HALF_ONE_PLUS_Z);
    let o = qe(&["report", &b, "--degree", "8", "--stages", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["verdict"], "Inconclusive");
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let big = write(
        dir.path(),
        "big.json",
        r#"{"d":1,"coeffs":[{"alpha":[0],"re":0.6,"im":0},{"alpha":[1],"re":0.6,"im":0}]}"#,
    );
    let o = qe(&["report", &big]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not contractive"));

    let constant = write(
        dir.path(),
        "c.json",
        r#"{"d":2,"coeffs":[{"alpha":[0,0],"re":0.3,"im":0}]}"#,
    );
    assert_eq!(qe(&["report", &constant]).status.code(), Some(1));
    let broken = write(dir.path(), "x.json", "{\"d\":1,");
    assert_eq!(qe(&["report", &broken]).status.code(), Some(1));
    let b = write(dir.path(), "b.json", HALF_ONE_PLUS_Z);
    assert_eq!(
        qe(&["report", &b, "--tol", "nonsense=1"]).status.code(),
        Some(1)
    );
}

fn fock(dir: &Path, name: &str, terms: &str) -> String {
    write(dir, name, &format!(r#"{{"d":2,"L":3,"coeffs":[{terms}]}}"#))
}

#[test]
fn fock_shift_examples() {
    let dir = tempfile::tempdir().unwrap();
    let b = fock(dir.path(), "b.json", r#"{"word":[1],"re":0.5,"im":0}"#);

    let a = fock(dir.path(), "a.json", r#"{"word":[1,2],"re":0.5,"im":0}"#);
    let v = json(&qe(&["fock-shift", "--a", &a, "--b", &b]));
    assert_eq!(v["v"], serde_json::json!([1, 2]));
    assert_eq!(v["kind"], "fock-shift");

    let a = fock(
        dir.path(),
        "a0.json",
        r#"{"word":[],"re":0.25,"im":0},{"word":[2],"re":0.25,"im":0}"#,
    );
    let v = json(&qe(&["fock-shift", "--a", &a, "--b", &b]));
    assert_eq!(v["v"], serde_json::json!([]));

    let a = fock(dir.path(), "a1.json", r#"{"word":[1,1],"re":0.4,"im":0}"#);
    let v = json(&qe(&["fock-shift", "--a", &a, "--b", &b]));
    assert!((v["value_at_zero"][0].as_f64().unwrap() - 0.4).abs() < 1e-15);

    let zero = fock(dir.path(), "z.json", "");
    assert_eq!(
        qe(&["fock-shift", "--a", &zero, "--b", &b]).status.code(),
        Some(1)
    );
}

#[test]
fn boundary_layers_tighten_the_node_score() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(dir.path(), "b.json", HALF_ONE_PLUS_Z);
    let args = [
        "report", &b, "--degree", "12", "--nodes", "64", "--radius", "0.999",
    ];
    let uniform = json(&qe(&args));
    let layered = qe(&[&args[..], &["--layout", "boundary-layers"]].concat());
    assert_eq!(layered.status.code(), Some(0));
    let layered = json(&layered);
    assert_eq!(layered["input"]["config"]["layout"], "boundary_layers");
    let last = |v: &Value| {
        let s = v["evidence"]["b_trace"]["scores"].as_array().unwrap();
        s.last().unwrap()["value"].as_f64().unwrap()
    };
    assert!(last(&layered) > last(&uniform));
    assert!((last(&layered) - 3.0).abs() < 0.03 * 3.0);
    assert!(layered["evidence"]["notes"].as_array().unwrap().is_empty());
}
