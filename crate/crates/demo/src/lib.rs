//! Browser demo: a synthetic benchmark evaluated in memory, a 2-D ranking
//! view, and correlation of pasted score pairs. Each operation has a plain
//! Rust entry point and a `wasm_bindgen` export that returns JSON.

use std::collections::BTreeMap;

use iqpp::eval::{kendall_tau, pearson, significance, DEFAULT_ALPHA};
use iqpp::predictors::{adapted_query_feedback, embedding_variance, score_variance};
use iqpp::retrieval::{precision_at_k, rank};
use iqpp::synth::{generate, SynthParams};
use iqpp::{Orientation, RetrievalConfig, Similarity};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct CorrelationRow {
    pub predictor: String,
    pub orientation: Orientation,
    pub pearson: Option<f64>,
    pub kendall: Option<f64>,
    pub t: Option<f64>,
    pub critical: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Serialize)]
pub struct QueryPoint {
    pub query: String,
    pub shift: f64,
    pub effectiveness: f64,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
pub struct Benchmark {
    pub measure: String,
    pub rows: Vec<CorrelationRow>,
    pub queries: Vec<QueryPoint>,
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn correlation_row(name: &str, orientation: Orientation, x: &[f64], y: &[f64]) -> Result<CorrelationRow, String> {
    let r = pearson(x, y).map_err(err)?;
    let tau = kendall_tau(x, y).map_err(err)?;
    let sig = r.map(|r| significance(r, x.len(), DEFAULT_ALPHA)).transpose().map_err(err)?;
    Ok(CorrelationRow {
        predictor: name.to_string(),
        orientation,
        pearson: r,
        kendall: tau,
        t: sig.as_ref().and_then(|s| s.t),
        critical: sig.as_ref().map(|s| s.critical),
        significant: sig.is_some_and(|s| s.significant),
    })
}

/// Generates a clustered corpus, ranks every query, and correlates three
/// post-retrieval predictors with P@k.
pub fn benchmark(params: &SynthParams, k: usize) -> Result<Benchmark, String> {
    let corpus = generate(params).map_err(err)?;
    let k = k.min(corpus.collection.len()).max(1);
    let top = RetrievalConfig::new(Similarity::Cosine, k).map_err(err)?;
    let full = RetrievalConfig::new(Similarity::Cosine, corpus.collection.len()).map_err(err)?;
    let names = ["score_variance", "adapted_query_feedback", "embedding_variance"];
    let mut queries = Vec::with_capacity(corpus.queries.len());
    for (qid, v) in corpus.queries.ids().iter().zip(corpus.queries.rows()) {
        let ignore = corpus.qrels.ignored_rows(qid, &corpus.collection);
        let ranked = rank(qid, v, &corpus.collection, &top, &ignore).map_err(err)?;
        let everything = rank(qid, v, &corpus.collection, &full, &ignore).map_err(err)?;
        let effectiveness = precision_at_k(&everything, &corpus.qrels, &corpus.collection, k).map_err(err)?;
        let values = [
            score_variance(&ranked).map_err(err)?,
            adapted_query_feedback(&ranked, &corpus.collection, &top, &ignore).map_err(err)?,
            embedding_variance(&ranked, &corpus.collection).map_err(err)?,
        ];
        queries.push(QueryPoint {
            query: qid.clone(),
            shift: corpus.shift[qid],
            effectiveness,
            scores: names.iter().map(|n| n.to_string()).zip(values).collect(),
        });
    }
    let truth: Vec<f64> = queries.iter().map(|q| q.effectiveness).collect();
    let rows = names
        .iter()
        .map(|&n| {
            let x: Vec<f64> = queries.iter().map(|q| q.scores[n]).collect();
            correlation_row(n, Orientation::HigherIsBetter, &x, &truth)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Benchmark {
        measure: format!("P@{k}"),
        rows,
        queries,
    })
}

#[derive(Debug, Serialize)]
pub struct RankView {
    /// `[x, y, cluster]` per collection item.
    pub docs: Vec<(f32, f32, usize)>,
    /// Collection rows of the top-k list, best first.
    pub hits: Vec<usize>,
    pub precision: f64,
    pub score_variance: f64,
    pub embedding_variance: f64,
    pub adapted_query_feedback: f64,
}

/// Ranks a 2-D clustered collection against the point `(x, y)`. Relevant
/// items are those in the cluster whose center is closest to the query.
pub fn rank_points(seed: u64, x: f32, y: f32, euclidean: bool, k: usize) -> Result<RankView, String> {
    let params = SynthParams {
        clusters: 4,
        docs: 400,
        queries: 4,
        dim: 2,
        spread: 0.35,
        max_shift: 0.0,
        seed,
    };
    let corpus = generate(&params).map_err(err)?;
    let coll = &corpus.collection;
    let sim = if euclidean { Similarity::NegEuclidean } else { Similarity::Cosine };
    let cfg = RetrievalConfig::new(sim, k.clamp(1, coll.len())).map_err(err)?;
    let ranked = rank("probe", &[x, y], coll, &cfg, &[]).map_err(err)?;
    // queries sit on their cluster centers when max_shift is 0
    let nearest = corpus
        .queries
        .rows()
        .zip(corpus.queries.ids())
        .map(|(c, id)| ((c[0] - x).powi(2) + (c[1] - y).powi(2), corpus.query_cluster[id]))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
        .unwrap_or(0);
    let relevant = ranked.rows().filter(|&r| corpus.doc_cluster[r] == nearest).count();
    Ok(RankView {
        docs: coll
            .rows()
            .zip(&corpus.doc_cluster)
            .map(|(v, &c)| (v[0], v[1], c))
            .collect(),
        hits: ranked.rows().collect(),
        precision: relevant as f64 / ranked.len() as f64,
        score_variance: score_variance(&ranked).map_err(err)?,
        embedding_variance: embedding_variance(&ranked, coll).map_err(err)?,
        adapted_query_feedback: adapted_query_feedback(&ranked, coll, &cfg, &[]).map_err(err)?,
    })
}

/// Parses two numeric columns separated by whitespace, commas or tabs.
/// Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<(Vec<f64>, Vec<f64>), String> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let [a, b] = fields[..] else {
            return Err(format!("line {}: expected two values, got {}", i + 1, fields.len()));
        };
        let parse = |s: &str| s.parse::<f64>().map_err(|_| format!("line {}: `{s}` is not a number", i + 1));
        x.push(parse(a)?);
        y.push(parse(b)?);
    }
    Ok((x, y))
}

/// Pearson and Kendall tau-b of pasted pairs with t-test significance.
pub fn correlate(text: &str) -> Result<CorrelationRow, String> {
    let (x, y) = parse_pairs(text)?;
    let mut row = correlation_row("pasted", Orientation::HigherIsBetter, &x, &y)?;
    row.predictor = format!("{} pairs", x.len());
    Ok(row)
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = runBenchmark)]
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    clusters: usize,
    docs: usize,
    queries: usize,
    dim: usize,
    spread: f64,
    max_shift: f64,
    seed: u32,
    k: usize,
) -> Result<String, JsError> {
    let params = SynthParams { clusters, docs, queries, dim, spread, max_shift, seed: seed as u64 };
    to_js(benchmark(&params, k))
}

#[wasm_bindgen(js_name = rankPoints)]
pub fn rank_points_js(seed: u32, x: f32, y: f32, euclidean: bool, k: usize) -> Result<String, JsError> {
    to_js(rank_points(seed as u64, x, y, euclidean, k))
}

#[wasm_bindgen(js_name = correlate)]
pub fn correlate_js(text: &str) -> Result<String, JsError> {
    to_js(correlate(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_separates_easy_from_hard_queries() {
        let params = SynthParams { docs: 600, queries: 40, dim: 16, ..SynthParams::default() };
        let b = benchmark(&params, 60).unwrap();
        assert_eq!(b.queries.len(), 40);
        assert_eq!(b.measure, "P@60");
        let ev = b.rows.iter().find(|r| r.predictor == "embedding_variance").unwrap();
        assert!(ev.pearson.unwrap() < -0.3, "{ev:?}");
    }

    #[test]
    fn rank_view_has_k_hits_on_the_probed_cluster() {
        let v = rank_points(1, 1.0, 0.0, true, 20).unwrap();
        assert_eq!(v.docs.len(), 400);
        assert_eq!(v.hits.len(), 20);
        assert!((0.0..=1.0).contains(&v.adapted_query_feedback));
        assert!(v.precision > 0.5);
    }

    #[test]
    fn pasted_pairs() {
        let row = correlate("# x y\n1, 2\n2 4\n3\t5\n\n4;9\n").unwrap();
        assert_eq!(row.predictor, "4 pairs");
        assert_eq!(row.kendall, Some(1.0));
        assert!(row.pearson.unwrap() > 0.9);
        assert!(correlate("1 2 3\n").unwrap_err().contains("line 1"));
        assert!(correlate("1 x\n").is_err());
        assert!(correlate("1 2\n3 4\n").is_err());
    }
}
