//! Files produced outside the engine (embedding extractors, deep-predictor
//! score jobs, object detectors) load through the public readers, and the
//! similarity matrices the engine emits for them read back intact.

use std::path::Path;

use iqpp::io::{load_detections, load_embeddings, load_similarity_matrices};
use iqpp::pipeline::{emit_matrices, run, Config, Stage};
use iqpp::predictors::register_external_predictor;
use iqpp::synth::{generate, write_fixture, SynthParams};
use iqpp::{Measure, Orientation};

/// IQPPEMB1 bytes assembled by hand, as a foreign writer would.
fn embedding_bytes(ids: &[&str], rows: &[[f32; 2]]) -> Vec<u8> {
    let mut b = b"IQPPEMB1".to_vec();
    b.extend_from_slice(&2u32.to_le_bytes());
    b.extend_from_slice(&(ids.len() as u64).to_le_bytes());
    for id in ids {
        b.extend_from_slice(&(id.len() as u16).to_le_bytes());
        b.extend_from_slice(id.as_bytes());
    }
    for r in rows {
        for v in r {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

fn small_fixture(dir: &Path) -> Config {
    let params = SynthParams { docs: 200, queries: 20, dim: 8, seed: 5, ..SynthParams::default() };
    let corpus = generate(&params).unwrap();
    let path = write_fixture(&corpus, &params, dir).unwrap();
    let mut config = Config::from_path(path).unwrap();
    config.kmeans.clusters = 10;
    config.feature_removal.m = 2;
    config.feature_removal.l = 2;
    config
}

#[test]
fn extracted_embeddings_load_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gem.bin");
    let s = std::f32::consts::FRAC_1_SQRT_2;
    std::fs::write(&p, embedding_bytes(&["a.jpg", "b.jpg", "c.jpg"], &[[1.0, 0.0], [0.0, 1.0], [s, s]])).unwrap();
    let store = load_embeddings(&p).unwrap();
    assert_eq!(store.len(), 3);
    assert_eq!(store.dim(), 2);
    assert!(store.is_normalized());
    assert_eq!(store.ids(), ["a.jpg", "b.jpg", "c.jpg"]);
}

#[test]
fn extracted_embeddings_in_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gem.jsonl");
    std::fs::write(&p, "{\"id\":\"a\",\"v\":[0.6,0.8]}\n{\"id\":\"b\",\"v\":[1.0,0.0]}\n").unwrap();
    let store = load_embeddings(&p).unwrap();
    assert_eq!(store.get("a"), Some(&[0.6f32, 0.8][..]));
}

#[test]
fn detector_output_loads() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("boxes.jsonl");
    std::fs::write(&p, "{\"id\":\"q1\",\"boxes\":[{\"w\":10,\"h\":20},{\"w\":3.5,\"h\":4}]}\n{\"id\":\"q2\",\"boxes\":[]}\n").unwrap();
    let d = load_detections(&p).unwrap();
    assert_eq!(d.get("q1").unwrap().len(), 2);
    assert_eq!(d.get("q2").unwrap().len(), 0);
}

#[test]
fn score_file_must_cover_every_query() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("vit.tsv");
    std::fs::write(&p, "# orientation=HIGHER_IS_BETTER\nq1\t0.5\n").unwrap();
    let queries = vec!["q1".to_string(), "q2".to_string()];
    assert_eq!(register_external_predictor(&p, &queries).unwrap_err().code(), "MISSING_SCORES");
    let out = register_external_predictor(&p, &queries[..1]).unwrap();
    assert_eq!(out.name, "vit");
}

#[test]
fn external_scores_flow_into_the_report_without_advisories() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_fixture(dir.path());
    let queries = load_embeddings(&config.systems[0].queries).unwrap();
    let mut text = String::from("# orientation=HIGHER_IS_HARDER\n# predictor=ae_masked\n");
    for (i, q) in queries.ids().iter().enumerate() {
        text.push_str(&format!("{q}\t{}\n", (i as f64 * 0.37).sin()));
    }
    let score_path = dir.path().join("ae.tsv");
    std::fs::write(&score_path, text).unwrap();
    config.external_scores.push(serde_json::from_value(serde_json::json!({"path": score_path})).unwrap());
    let summary = run(&config, Stage::Evaluate).unwrap();
    assert!(summary.advisories.is_empty(), "{:?}", summary.advisories);
    let report = summary.report.unwrap();
    let row = report.row("ae_masked", "cosine", Measure::PrecisionAt(100)).unwrap();
    assert_eq!(row.orientation, Orientation::HigherIsHarder);
    assert_eq!(row.n, 20);
}

#[test]
fn emitted_matrices_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_fixture(dir.path());
    config.systems[0].k = 15;
    let files = emit_matrices(&config).unwrap();
    let (meta, matrices) = load_similarity_matrices(&files[0]).unwrap();
    assert_eq!(meta.get("config_hash"), Some(config.hash().as_str()));
    assert_eq!(matrices.len(), 20);
    for m in &matrices {
        assert_eq!(m.size, 15);
        for i in 0..m.size {
            assert!((m.get(i, i) - 1.0).abs() < 1e-6);
            for j in 0..m.size {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }
}
