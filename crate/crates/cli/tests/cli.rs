use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qpp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpp"))
        .args(args)
        .current_dir(cwd)
        .env_remove("IQPP_SEED")
        .output()
        .unwrap()
}

fn fixture(dir: &Path, docs: &str, queries: &str) -> PathBuf {
    let out = qpp(
        &["synth", "--out", ".", "--docs", docs, "--queries", queries, "--dim", "8", "--seed", "7"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("bench.json")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn missing_qrels_exits_2_at_ingest() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "100", "10");
    std::fs::remove_file(dir.path().join("qrels.tsv")).unwrap();
    let out = qpp(&["run", "--config", "bench.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["stage"], "ingest");
    assert_eq!(err["code"], "IO_ERROR");
}

#[test]
fn unreadable_config_exits_2_at_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bench.json"), "{\"systems\": [], \"bogus\": 1}").unwrap();
    let out = qpp(&["validate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["stage"], "config");
}

#[test]
fn ground_truth_writes_precision_table() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "300", "20");
    let out = qpp(&["ground-truth", "--measure", "p@100", "--k", "100"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("out/effectiveness/cosine.P@100.tsv")).unwrap();
    assert!(table.lines().any(|l| l == "# measure=P@100"));
    assert!(table.lines().any(|l| l.starts_with("# config_hash=")));
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 20);
    for r in rows {
        let v: f64 = r.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v) && ((v * 100.0).round() - v * 100.0).abs() < 1e-9);
    }
    assert!(!dir.path().join("out/report.csv").exists());
}

#[test]
fn run_writes_report_with_every_predictor() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "300", "30");
    let out = qpp(&["run", "--config", "bench.json", "--threads", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    for name in [
        "objects_over_area",
        "kmeans_cluster_density",
        "class_head_dispersion",
        "class_head_kurtosis",
        "score_variance",
        "adapted_query_feedback",
        "iterative_feature_removal",
        "embedding_variance",
        "meta_regressor",
    ] {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{name},"))), "{name} missing");
    }
}

#[test]
fn k_sweep_writes_six_reports() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "320", "20");
    let args = ["sweep", "--param", "K", "--from", "50", "--to", "300", "--step", "50"];
    let out = qpp(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for k in [50, 100, 150, 200, 250, 300] {
        assert!(dir.path().join(format!("out/sweep/K_{k}/report.json")).exists(), "K={k}");
    }
    let summary = dir.path().join("out/sweep/K_summary.csv");
    let first = std::fs::read(&summary).unwrap();
    let again = qpp(&[&args[..], &["--output-dir", "again"]].concat(), dir.path());
    assert!(again.status.success());
    assert_eq!(std::fs::read(dir.path().join("again/sweep/K_summary.csv")).unwrap(), first);
}

#[test]
fn empty_sweep_range_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "100", "10");
    let out = qpp(&["sweep", "--param", "m", "--from", "60", "--to", "10", "--step", "10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "INVALID_RANGE");
}

#[test]
fn emit_matrices_writes_one_file_per_system() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), "100", "10");
    let out = qpp(&["emit-matrices", "--config", "bench.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/matrices/cosine.bin").exists());
}
