use std::path::Path;
use std::process::{Command, Output};

use ergokit::io::{chain_from_csv, chain_from_json};
use serde_json::Value;

fn ergokit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergokit")).args(args).output().expect("run ergokit")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_exit_codes() {
    let flip = ergokit(&["analyze", "--gen", "flip"]);
    assert_eq!(flip.status.code(), Some(2));
    let v = json(&flip);
    assert_eq!(v["irreducible"], true);
    assert_eq!(v["periods"]["0"], 2);

    let cube = ergokit(&["analyze", "--gen", "lazy_hypercube", "--params", "d=3"]);
    assert_eq!(cube.status.code(), Some(0));
    assert_eq!(json(&cube)["primitivity_exponent"], 3);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(ergokit(&["analyze"]).status.code(), Some(1));
    assert_eq!(ergokit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ergokit(&["analyze", "--gen", "cycle", "--params", "L=0"]).status.code(), Some(1));
    assert_eq!(ergokit(&["analyze", "--chain", "/no/such/file.json"]).status.code(), Some(1));
    assert_eq!(ergokit(&["stationary", "--gen", "flip", "--methods", "magic"]).status.code(), Some(1));
    assert_eq!(ergokit(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_csv_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b\n0.5,oops\n0.5,0.5\n").unwrap();
    let out = ergokit(&["analyze", "--chain", path_str(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a number"));
}

#[test]
fn stationary_identity_is_negative() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("id.json");
    std::fs::write(&path, r#"{"states": ["a", "b"], "matrix": [[1, 0], [0, 1]]}"#).unwrap();
    let out = ergokit(&["stationary", "--chain", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    for m in v["methods"].as_array().unwrap() {
        assert!(m["error"].is_string(), "{m}");
    }
}

#[test]
fn mix_examples() {
    let uniform = json(&ergokit(&["mix", "--gen", "uniform", "--params", "n=4"]));
    assert_eq!(uniform["mixing"][0]["empirical_tmix"], 1);
    let two = json(&ergokit(&["mix", "--gen", "two_state", "--params", "p=0.2,q=0.3"]));
    assert_eq!(two["mixing"][0]["empirical_tmix"], 2);
    assert_eq!(two["mixing"][0]["bound_tmix"], 7);
}

#[test]
fn mix_writes_curve_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (curve, trace) = (dir.path().join("curve.csv"), dir.path().join("trace.csv"));
    let out = ergokit(&[
        "mix",
        "--gen",
        "two_state",
        "--params",
        "p=0.2,q=0.3",
        "--horizon",
        "4",
        "--csv",
        path_str(&curve),
        "--trace",
        path_str(&trace),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&curve).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,d,n_delta,theta_pow");
    assert_eq!(lines.len(), 6);
    let d1: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!((d1 - 0.3).abs() < 1e-15);
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("column,i,m,M,delta\n"));
}

#[test]
fn couple_examples() {
    let out = ergokit(&["couple", "--gen", "uniform", "--params", "n=3", "--trials", "20000", "--start", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "pass");
    assert_eq!(v["start_y"], "2");

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("lemma.csv");
    let out = ergokit(&[
        "couple", "--gen", "two_state", "--params", "p=0.2,q=0.3", "--trials", "20000", "--horizon", "10", "--seed",
        "7", "--csv", path_str(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("step,exact_tv,tail,tail_se\n"));
    assert_eq!(text.lines().count(), 12);

    assert_eq!(ergokit(&["couple", "--gen", "flip"]).status.code(), Some(2));
    assert_eq!(ergokit(&["couple", "--gen", "flip", "--start", "z"]).status.code(), Some(1));
}

#[test]
fn couple_is_reproducible_across_thread_counts() {
    let args = ["couple", "--gen", "top_to_random", "--params", "k=3", "--trials", "30000", "--seed", "11"];
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_ergokit"))
            .args(args)
            .env("ERGOKIT_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn generate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for (gen, params) in [("lazy_hypercube", "d=3"), ("top_to_random", "k=3"), ("two_state", "p=0.1,q=0.7")] {
        let json_out = ergokit(&["generate", "--gen", gen, "--params", params]);
        assert_eq!(json_out.status.code(), Some(0));
        let from_json = chain_from_json(std::str::from_utf8(&json_out.stdout).unwrap()).unwrap();
        let csv_out = ergokit(&["generate", "--gen", gen, "--params", params, "--format", "csv"]);
        let from_csv = chain_from_csv(std::str::from_utf8(&csv_out.stdout).unwrap()).unwrap();
        assert_eq!(from_json.to_rows(), from_csv.to_rows());

        let path = dir.path().join(format!("{gen}.csv"));
        std::fs::write(&path, &csv_out.stdout).unwrap();
        let again = ergokit(&["generate", "--gen", gen, "--params", params, "--format", "csv"]);
        assert_eq!(again.stdout, csv_out.stdout);
        let analyzed = ergokit(&["stationary", "--chain", path_str(&path), "--methods", "linear"]);
        assert_eq!(analyzed.status.code(), Some(0));
    }
}

#[test]
fn pagerank_from_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.txt");
    std::fs::write(&edges, "a b\nb c\nc a\na c\n").unwrap();
    let params = format!("edges={},damping=0.85", path_str(&edges));
    let out = ergokit(&["stationary", "--gen", "pagerank", "--params", &params]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let pi = &v["methods"][0]["pi"];
    let total: f64 = ["a", "b", "c"].iter().map(|s| pi[s].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn report_two_state() {
    let out = ergokit(&["report", "--gen", "two_state", "--params", "p=0.2,q=0.3", "--trials", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["verdicts"].as_object().unwrap().values().all(|s| s == "pass"));
    let flip = ergokit(&["report", "--gen", "flip", "--trials", "1000"]);
    assert_eq!(flip.status.code(), Some(2));
    assert_eq!(json(&flip)["verdicts"]["ergodicity"], "fail");
}
