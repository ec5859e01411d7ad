use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use schur_agler::cli::{ColligationArtifact, DecompositionArtifact, ProblemFile};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn agler(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agler"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn agler_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agler"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timestamp(mut v: Value) -> Value {
    v["provenance"].as_object_mut().unwrap().remove("timestamp");
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_constrained_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("check.json");
    let run = agler(&["check", s(&fixture("constrained_infeasible.json")), "--out", s(&out)]);
    assert_eq!(code(&run), 2);
    let v = read_json(&out);
    assert_eq!(v["status"], "infeasible");
    let alpha = v["witness"]["alpha"][0][0].as_f64().unwrap();
    let beta = v["witness"]["beta"][0][0].as_f64().unwrap();
    assert!((alpha - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    assert!((beta - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    let pick = &v["witness"]["pick"];
    assert!((pick[0][1][0].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!((pick[1][1][0].as_f64().unwrap() - 29.0 / 32.0).abs() < 1e-12);

    let run = agler(&["check", s(&fixture("constrained_feasible.json")), "--out", s(&out)]);
    assert_eq!(code(&run), 0);
    let v = read_json(&out);
    assert_eq!(v["status"], "feasible");
    assert!(v["samples_used"].as_u64().unwrap() >= 1000);
}

#[test]
fn input_errors_have_their_own_exit_codes() {
    assert_eq!(code(&agler(&["check", s(&fixture("malformed.json"))])), 64);
    let run = agler(&["check", s(&fixture("malformed.json"))]);
    assert!(String::from_utf8_lossy(&run.stderr).contains("malformed.json:1:"));
    assert_eq!(code(&agler(&["check", s(&fixture("does_not_exist.json"))])), 66);
    assert_eq!(code(&agler(&["realize", s(&fixture("does_not_exist.json"))])), 66);
    assert_eq!(code(&agler(&["frobnicate"])), 64);
    assert_eq!(code(&agler(&["testfn", "-n", "0"])), 64);
}

#[test]
fn decompose_realize_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let dec = dir.path().join("z2.dec.json");
    let col = dir.path().join("z2.col.json");
    assert_eq!(code(&agler(&["decompose", s(&fixture("z_squared.json")), "--out", s(&dec)])), 0);
    let artifact: DecompositionArtifact = serde_json::from_str(&std::fs::read_to_string(&dec).unwrap()).unwrap();
    assert!(artifact.decomposition.as_ref().unwrap().residual <= 1e-7);

    assert_eq!(code(&agler(&["realize", s(&dec), "--out", s(&col)])), 0);
    let c: ColligationArtifact = serde_json::from_str(&std::fs::read_to_string(&col).unwrap()).unwrap();
    assert!(c.report.max_error <= 1e-10);
    assert!(c.report.unitarity_defect <= 1e-12);

    let run = agler(&["eval", s(&col), "0.3", "0"]);
    assert_eq!(code(&run), 0);
    let v: Value = serde_json::from_slice(&run.stdout).unwrap();
    let at = |k: usize| {
        let z = &v["values"][k]["value"][0][0];
        (z[0].as_f64().unwrap(), z[1].as_f64().unwrap())
    };
    let (re, im) = at(0);
    assert!((re - 0.09).abs() < 1e-9 && im.abs() < 1e-9);
    let d = &c.colligation.d[0][0];
    let (re, im) = at(1);
    assert!((re - d[0]).abs() < 1e-15 && (im - d[1]).abs() < 1e-15);

    let run = agler(&["eval", s(&col), "[0.9999999, 0]"]);
    assert_eq!(code(&run), 0);
    assert!(String::from_utf8_lossy(&run.stderr).contains("warning"));
}

#[test]
fn decompose_polydisk_and_separation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pd.json");
    assert_eq!(code(&agler(&["decompose", s(&fixture("polydisk_z1z2.json")), "--out", s(&out)])), 0);
    let v = read_json(&out);
    assert!(v["decomposition"]["residual"].as_f64().unwrap() <= 1e-7);
    let realized = dir.path().join("pd.col.json");
    assert_eq!(code(&agler(&["realize", s(&out), "--out", s(&realized)])), 0);

    let sep = dir.path().join("sep.json");
    assert_eq!(code(&agler(&["decompose", s(&fixture("z_vs_antipodal.json")), "--out", s(&sep)])), 2);
    let v = read_json(&sep);
    assert_eq!(v["status"], "infeasible");
    assert!(v["evidence"]["margin"].as_f64().unwrap() > 0.0);

    let undecided = dir.path().join("u.json");
    let run = agler(&["decompose", s(&fixture("polydisk_z1z2.json")), "--max-iters", "1", "--out", s(&undecided)]);
    assert_eq!(code(&run), 3);
    assert_eq!(code(&agler(&["realize", s(&undecided)])), 65);
}

#[test]
fn tampered_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let dec = dir.path().join("dec.json");
    assert_eq!(code(&agler(&["decompose", s(&fixture("z_squared.json")), "--out", s(&dec)])), 0);
    let mut v = read_json(&dec);
    let entry = &mut v["decomposition"]["grams"][0][1][1][0];
    *entry = Value::from(entry.as_f64().unwrap() + 1e-3);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(code(&agler(&["realize", s(&tampered)])), 65);

    let col = dir.path().join("col.json");
    assert_eq!(code(&agler(&["realize", s(&dec), "--out", s(&col)])), 0);
    let mut v = read_json(&col);
    let entry = &mut v["colligation"]["a"][0][0][0];
    *entry = Value::from(entry.as_f64().unwrap() + 1e-4);
    std::fs::write(&tampered, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(code(&agler(&["eval", s(&tampered), "0.1"])), 65);
}

#[test]
fn artifacts_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (name, cmd) in [
        ("polydisk_z1z2.json", "decompose"),
        ("constrained_infeasible.json", "check"),
        ("z_vs_antipodal.json", "decompose"),
    ] {
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        agler(&[cmd, s(&fixture(name)), "--seed", "7", "--out", s(&a)]);
        agler_env(&[cmd, s(&fixture(name)), "--seed", "7", "--out", s(&b)], "AGLER_THREADS", "1");
        assert_eq!(without_timestamp(read_json(&a)), without_timestamp(read_json(&b)), "{name}");
    }
}

#[test]
fn testfn_sampling() {
    let a = agler(&["testfn", "-n", "1", "--count", "3", "--seed", "11"]);
    let b = agler(&["testfn", "-n", "1", "--count", "3", "--seed", "11"]);
    assert_eq!(code(&a), 0);
    let (va, vb): (Value, Value) = (
        serde_json::from_slice(&a.stdout).unwrap(),
        serde_json::from_slice(&b.stdout).unwrap(),
    );
    assert_eq!(without_timestamp(va), without_timestamp(vb));

    let run = agler(&["testfn", "-n", "1", "--count", "2", "--include-antipodal"]);
    let v: Value = serde_json::from_slice(&run.stdout).unwrap();
    let w = &v["measures"][0]["weights"];
    assert!((w[0][0][0][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((w[1][0][0][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn problem_files_round_trip() {
    for name in [
        "constrained_infeasible.json",
        "constrained_feasible.json",
        "polydisk_z1z2.json",
        "z_squared.json",
        "z_vs_antipodal.json",
    ] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let once = ProblemFile::parse(&text).unwrap().to_json();
        let twice = ProblemFile::parse(&once).unwrap().to_json();
        assert_eq!(once, twice, "{name}");
    }
}
