use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsm-geom"))
        .args(args)
        .env_remove("DSM_GEOM_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn gaussian_classify_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = dsm(&["--model", "gaussian-kl", "--op", "classify", "--grid", "default", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let doc = read_json(&out);
    assert_eq!(doc["results"]["exponential_family"], "yes");
    let keys: Vec<&str> = doc.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = vec![
        "schema_version", "model", "op", "inputs", "results", "residuals", "verdicts", "tolerances", "runtime_ms",
    ];
    expected.sort_unstable();
    let mut keys = keys;
    keys.sort_unstable();
    assert_eq!(keys, expected);
    assert_eq!(doc["schema_version"], "1.0");
    assert_eq!(doc["runtime_ms"], Value::Null);
}

#[test]
fn gumbel_failure_is_data() {
    let doc = stdout_json(&dsm(&["--model", "gumbel", "--op", "classify"]));
    assert_eq!(doc["results"]["condition4"]["status"], "fail");
    let ratio = doc["results"]["condition4_evidence"]["evidence_ratio"].as_f64().unwrap();
    assert!((ratio - 1.64).abs() < 0.02, "{ratio}");
    assert_eq!(doc["verdicts"]["matches_expected"], true);
}

#[test]
fn gce_geodesic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let o = dsm(&[
        "--model", "gce", "--levels", "1,2,3", "--op", "geodesic", "--start", "1,-1", "--velocity", "1,0.5", "--t",
        "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').next(), Some("t"));
    let columns = header.split(',').count();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.iter().all(|r| r.len() == columns));
    let last = rows.last().unwrap();
    assert!((last[0] - 1.0).abs() < 1e-12 && (last[1] - 2.0).abs() < 1e-6 && (last[2] + 0.75).abs() < 1e-6, "{last:?}");
    // The JSON document sits beside the trace.
    assert_eq!(read_json(&out.with_extension("json"))["op"], "geodesic");
}

#[test]
fn tight_condition4_tolerance_still_passes_on_gaussian() {
    let doc = stdout_json(&dsm(&["--model", "gaussian-kl", "--op", "classify", "--tol", "cond4=1e-9"]));
    assert_eq!(doc["results"]["condition4"]["status"], "pass");
    assert_eq!(doc["tolerances"]["cond4"], 1e-9);
}

#[test]
fn report_is_deterministic_and_complete() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = dsm(&["--op", "report", "--seed", "42", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 10);
    for n in &names {
        let x = std::fs::read(a.path().join(n)).unwrap();
        let y = std::fs::read(b.path().join(n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
    let csv = std::fs::read_to_string(a.path().join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let expect = [
        ("gaussian-kl", "yes"),
        ("gaussian-sumsq", "n/a-flat"),
        ("regression-ls", "fail-cond4"),
        ("regression-dlambda", "n/a-flat"),
        ("gce", "yes"),
        ("vmf-sphere", "no-curved"),
        ("vmf-cylinder", "yes"),
        ("gumbel", "fail-cond4"),
    ];
    assert_eq!(rows.len(), expect.len());
    for (row, (model, label)) in rows.iter().zip(expect) {
        assert_eq!((row[0], row[1], row[3]), (model, label, "true"), "{row:?}");
    }
    for model in ["gaussian-sumsq", "regression-dlambda"] {
        let row = rows.iter().find(|r| r[0] == model).unwrap();
        assert_eq!((row[4], row[5]), ("not-applicable", "pass"), "{row:?}");
    }
}

#[test]
fn thread_count_does_not_change_the_report() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |dir: &Path, threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_dsm-geom"))
            .args(["--op", "report", "--out", dir.to_str().unwrap()])
            .env("DSM_GEOM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
    };
    run(a.path(), "1");
    run(b.path(), "4");
    for f in ["summary.json", "summary.csv", "gce.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    // Configuration errors.
    assert_eq!(code(&dsm(&["--model", "nope", "--op", "metric"])), 1);
    assert_eq!(code(&dsm(&["--model", "gce", "--op", "bogus"])), 1);
    assert_eq!(code(&dsm(&["--model", "gaussian-kl", "--op", "metric", "--start", "0,-1"])), 1);
    assert_eq!(code(&dsm(&["--model", "gaussian-kl"])), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_dsm-geom"))
        .args(["--model", "gce", "--op", "metric"])
        .env("DSM_GEOM_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    // I/O.
    assert_eq!(code(&dsm(&["--config", "/nonexistent/run.json"])), 3);
    // The parent is a regular file, so no directory can be made.
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = dsm(&["--model", "gce", "--op", "metric", "--out", blocker.join("m.json").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    // Numerical failure: the fit stalls at the sphere's pole.
    let o = dsm(&[
        "--model", "vmf-sphere", "--op", "fit", "--start", "0.06,0",
        "--data", r#"{"kind":"moments","values":{"x1":0.0,"x2":0.0,"x3":-1.0}}"#,
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    // Expected-failure verdicts are not errors.
    assert_eq!(code(&dsm(&["--model", "regression-ls", "--op", "affine"])), 0);
}

#[test]
fn config_file_rejects_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.json");
    std::fs::write(&p, r#"{"model": "gce", "op": "metric", "colour": "blue"}"#).unwrap();
    assert_eq!(code(&dsm(&["--config", p.to_str().unwrap()])), 1);
    std::fs::write(&p, r#"{"model": "gce", "op": "metric", "params": {"levels": [1, 2, 3]}, "start": [1.0, 0.2]}"#).unwrap();
    let doc = stdout_json(&dsm(&["--config", p.to_str().unwrap()]));
    assert_eq!(doc["model"], "gce");
    // Flags override the file.
    let doc = stdout_json(&dsm(&["--config", p.to_str().unwrap(), "--start", "2,0.1"]));
    assert_eq!(doc["inputs"]["start"], serde_json::json!([2.0, 0.1]));
}

#[test]
fn every_op_emits_the_document_keys() {
    let cases: &[&[&str]] = &[
        &["--model", "gaussian-kl", "--op", "fit"],
        &["--model", "gaussian-kl", "--op", "metric"],
        &["--model", "vmf-sphere", "--op", "connection"],
        &["--model", "vmf-sphere", "--op", "curvature"],
        &["--model", "gce", "--op", "affine", "--targets", "2,0.3"],
        &["--model", "vmf-cylinder", "--op", "massieu", "--start", "0,1", "--targets", "0.4,1.5"],
        &["--model", "gce", "--op", "transport", "--path", "1,0;2,0.5", "--velocity", "1,0"],
        &["--model", "gce", "--op", "field", "--start", "1,0", "--velocity", "1,0"],
        &["--model", "gaussian-kl", "--op", "pythagoras", "--start", "0,1", "--other", "1,1"],
    ];
    for args in cases {
        let doc = stdout_json(&dsm(args));
        for k in ["schema_version", "model", "op", "inputs", "results", "residuals", "verdicts", "tolerances"] {
            assert!(doc.get(k).is_some(), "{args:?} lacks {k}");
        }
    }
}

#[test]
fn timing_is_opt_in() {
    let doc = stdout_json(&dsm(&["--model", "gce", "--op", "metric", "--timing"]));
    assert!(doc["runtime_ms"].is_number());
}

#[test]
fn transport_matches_the_closed_form() {
    let doc = stdout_json(&dsm(&["--model", "gce", "--op", "transport", "--path", "1,0;2,0.5", "--velocity", "1,0"]));
    let v: Vec<f64> = doc["results"]["final_vector"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((v[0] - 1.0).abs() < 1e-5 && (v[1] + 0.25).abs() < 1e-5, "{v:?}");
    assert!(doc["residuals"]["closed_form"].as_f64().unwrap() < 1e-5);
}
