use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_geofm-bench");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("GEOFM_BENCH_OUT").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn prepare(corpus: &Path, out: &Path) {
    let o = run(&[
        "prepare",
        "--synthetic",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--size",
        "32",
        "--train",
        "6",
        "--val",
        "2",
        "--test",
        "2",
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn train_args<'a>(corpus: &'a str, out: &'a str, lr: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--corpus", corpus, "--out", out, "--epochs", "1", "--patch-size", "8", "--batch-size", "4", "--lr", lr,
    ]
}

#[test]
fn usage_errors_exit_with_two() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    let o = run(&["report", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn missing_run_is_a_dangling_reference() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["report", "--out", out.path().to_str().unwrap(), "--run", "missing-id"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing-id"), "{}", stderr(&o));
}

#[test]
fn unknown_run_file_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "epochs = 3\nlearning_rate = 0.1\n").unwrap();
    let o = run(&["--config", path.to_str().unwrap(), "report", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_evaluate_report_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("toy");
    let flag_out = dir.path().join("ignored");
    let env_out = dir.path().join("out");
    prepare(&corpus, &env_out);
    let (c, f) = (corpus.to_str().unwrap(), flag_out.to_str().unwrap());

    let o = Command::new(BIN)
        .args(train_args(c, f, "0.001"))
        .env("GEOFM_BENCH_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!flag_out.exists());
    let runs: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let run_id = runs[0]["run_id"].as_str().unwrap().to_string();

    let e = env_out.to_str().unwrap();
    let o = run(&["evaluate", "--out", e, "--run", &run_id, "--corpus", c, "--split", "val"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(eval["split"], "val");

    let o = run(&["report", "--out", e]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(env_out.join("tables/metrics.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 2);
    let o = run(&["report", "--out", e]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(env_out.join("tables/metrics.csv")).unwrap(), first);
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("toy");
    let out = dir.path().join("out");
    prepare(&corpus, &out);
    let o = run(&train_args(corpus.to_str().unwrap(), out.to_str().unwrap(), "1e38"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
