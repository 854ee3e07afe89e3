use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use treeround::baselines::tt_svd;
use treeround::network::{deserialize, serialize};
use treeround::{DenseTensor, Target};

fn treeround(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treeround"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn smooth_input(dir: &Path) -> std::path::PathBuf {
    let t = DenseTensor::from_fn(vec![4, 4, 4, 4], |i| {
        1.0 / (1.0
            + i.iter()
                .enumerate()
                .map(|(k, &x)| (k + 1) as f64 * x as f64)
                .sum::<f64>())
    });
    let net = tt_svd(&t, 0.0).unwrap();
    let path = dir.join("net.json");
    std::fs::write(&path, serialize(&net)).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn round_writes_network_and_metrics() {
    let dir = TempDir::new().unwrap();
    let input = smooth_input(dir.path());
    let out = dir.path().join("r.json");
    let metrics = dir.path().join("m.json");
    let run = treeround(&[
        "round",
        "--input",
        s(&input),
        "--eps",
        "1e-3",
        "--method",
        "hiss",
        "--seed",
        "7",
        "--out",
        s(&out),
        "--metrics",
        s(&metrics),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let net = deserialize(&std::fs::read_to_string(&out).unwrap()).unwrap();
    net.validate().unwrap();
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(m["cr_over_input"].as_f64().unwrap() >= 1.0);
    assert!(m["relative_error"].as_f64().unwrap() <= 1e-3);
    assert_eq!(m["error_is_sampled"], false);
}

#[test]
fn round_is_deterministic_and_traces() {
    let dir = TempDir::new().unwrap();
    let input = smooth_input(dir.path());
    let trace = dir.path().join("trace.jsonl");
    let args = [
        "round",
        "--input",
        s(&input),
        "--eps",
        "1e-2",
        "--seed",
        "3",
    ];
    let a = treeround(&args);
    let mut traced = args.to_vec();
    traced.extend(["--trace", s(&trace)]);
    let b = treeround(&traced);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let lines = std::fs::read_to_string(&trace).unwrap();
    assert!(!lines.is_empty());
    for line in lines.lines() {
        let event: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(event["event"].is_string());
    }
}

#[test]
fn bench_all_methods_one_row_each() {
    let dir = TempDir::new().unwrap();
    let csv_path = dir.path().join("out.csv");
    let run = treeround(&[
        "bench",
        "--function",
        "hilbert",
        "--dim",
        "6",
        "--eps",
        "1e-2",
        "--method",
        "all",
        "--csv",
        s(&csv_path),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[0], "function");
    assert_eq!(header.len(), 11);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let methods: Vec<&str> = rows.iter().map(|r| &r[4]).collect();
    assert_eq!(
        methods,
        ["hiss", "hiss-noreshape", "hiss-random", "tt", "ht"]
    );
}

#[test]
fn contract_writes_dense_tensor() {
    let dir = TempDir::new().unwrap();
    let input = smooth_input(dir.path());
    let out = dir.path().join("t.json");
    let run = treeround(&[
        "contract",
        "--input",
        s(&input),
        "--target",
        "native",
        "--out",
        s(&out),
    ]);
    assert!(run.status.success());
    let dense: DenseTensor = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let net = deserialize(&std::fs::read_to_string(&input).unwrap()).unwrap();
    assert_eq!(dense, net.contract_to_dense(Target::Native).unwrap());
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(
        treeround(&["round", "--eps", "1e-3"]).status.code(),
        Some(2)
    );
    assert_eq!(
        treeround(&["bench", "--function", "nope", "--dim", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        treeround(&["round", "--input", "x", "--eps", "1", "--method", "svd"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(treeround(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        treeround(&["round", "--input", "x", "--eps=-1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn runtime_failures_exit_one_with_diagnostic() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    let run = treeround(&["contract", "--input", s(&missing)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("error"));

    let garbage = dir.path().join("bad.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    let run = treeround(&["round", "--input", s(&garbage), "--eps", "0.1"]);
    assert_eq!(run.status.code(), Some(1));
}
