//! Synthetic benchmark corpora: Gaussian clusters where relevance is
//! cluster membership and query difficulty grows with distance from the
//! query's own cluster center.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::{self, BoundingBox, DetectionFile, Meta};
use crate::model::{EmbeddingStore, Label, Qrels};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub clusters: usize,
    pub docs: usize,
    pub queries: usize,
    pub dim: usize,
    /// Expected norm of a document's offset from its center; centers have norm 1.
    pub spread: f64,
    /// Largest fraction of the way a query moves toward a neighboring center.
    pub max_shift: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            clusters: 5,
            docs: 2000,
            queries: 100,
            dim: 32,
            spread: 0.7,
            max_shift: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub collection: EmbeddingStore,
    pub queries: EmbeddingStore,
    pub qrels: Qrels,
    pub detections: DetectionFile,
    /// How far each query was moved off its cluster center, in `[0, max_shift]`.
    pub shift: BTreeMap<String, f64>,
    pub query_cluster: BTreeMap<String, usize>,
    /// Cluster of each collection row.
    pub doc_cluster: Vec<usize>,
}

impl SynthCorpus {
    /// Queries in the lower half of the shift range.
    pub fn central_queries(&self, max_shift: f64) -> Vec<String> {
        self.shift
            .iter()
            .filter(|(_, &s)| s <= max_shift / 2.0)
            .map(|(q, _)| q.clone())
            .collect()
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn generate(p: &SynthParams) -> Result<SynthCorpus> {
    if p.clusters < 2 || p.docs < p.clusters || p.queries == 0 || p.dim == 0 {
        return Err(Error::InvalidArgument(
            "need >= 2 clusters, at least one document per cluster, queries and dimensions".into(),
        ));
    }
    if p.spread.is_nan() || p.spread < 0.0 || !(0.0..=1.0).contains(&p.max_shift) {
        return Err(Error::InvalidArgument("spread must be >= 0 and max_shift in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Normal::new(0.0, p.spread / (p.dim as f64).sqrt()).expect("finite spread");
    let centers: Vec<Vec<f64>> = (0..p.clusters)
        .map(|_| unit((0..p.dim).map(|_| std.sample(&mut rng)).collect()))
        .collect();

    let width = (p.docs - 1).to_string().len();
    let mut doc_ids = Vec::with_capacity(p.docs);
    let mut doc_rows = Vec::with_capacity(p.docs);
    let mut doc_cluster = Vec::with_capacity(p.docs);
    for i in 0..p.docs {
        let c = i % p.clusters;
        doc_ids.push(format!("d{i:0width$}"));
        doc_rows.push(
            centers[c]
                .iter()
                .map(|&x| (x + noise.sample(&mut rng)) as f32)
                .collect::<Vec<f32>>(),
        );
        doc_cluster.push(c);
    }
    let collection = EmbeddingStore::from_rows(doc_ids.clone(), &doc_rows)?;

    let per_cluster = p.queries.div_ceil(p.clusters);
    let qwidth = (p.queries - 1).to_string().len();
    let mut q_ids = Vec::with_capacity(p.queries);
    let mut q_rows = Vec::with_capacity(p.queries);
    let mut shift = BTreeMap::new();
    let mut query_cluster = BTreeMap::new();
    let mut judgments = BTreeMap::new();
    let mut boxes = BTreeMap::new();
    for i in 0..p.queries {
        let c = i % p.clusters;
        let step = i / p.clusters;
        let t = if per_cluster > 1 {
            p.max_shift * step as f64 / (per_cluster - 1) as f64
        } else {
            0.0
        };
        let other = (c + 1 + rng.random_range(0..p.clusters - 1)) % p.clusters;
        let id = format!("q{i:0qwidth$}");
        q_rows.push(
            centers[c]
                .iter()
                .zip(&centers[other])
                .map(|(&a, &b)| (a + t * (b - a) + 0.25 * noise.sample(&mut rng)) as f32)
                .collect::<Vec<f32>>(),
        );
        let labels: BTreeMap<String, Label> = doc_ids
            .iter()
            .zip(&doc_cluster)
            .map(|(d, &dc)| {
                let l = if dc == c { Label::Relevant } else { Label::NonRelevant };
                (d.clone(), l)
            })
            .collect();
        judgments.insert(id.clone(), labels);
        let n_boxes = rng.random_range(0..5);
        boxes.insert(
            id.clone(),
            (0..n_boxes)
                .map(|_| BoundingBox {
                    w: rng.random_range(10.0..200.0f64).round(),
                    h: rng.random_range(10.0..200.0f64).round(),
                })
                .collect(),
        );
        shift.insert(id.clone(), t);
        query_cluster.insert(id.clone(), c);
        q_ids.push(id);
    }
    let queries = EmbeddingStore::from_rows(q_ids, &q_rows)?;
    let qrels = Qrels::new(judgments, &collection)?;
    Ok(SynthCorpus {
        collection,
        queries,
        qrels,
        detections: DetectionFile { boxes },
        shift,
        query_cluster,
        doc_cluster,
    })
}

/// Writes the corpus as benchmark inputs under `dir` (`collection.bin`,
/// `queries.bin`, `qrels.tsv`, `detections.jsonl`, `shift.tsv`) plus a
/// `bench.json` config with one cosine system. Returns the config path.
pub fn write_fixture(corpus: &SynthCorpus, params: &SynthParams, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    io::write_embeddings_binary(&corpus.collection, dir.join("collection.bin"))?;
    io::write_embeddings_binary(&corpus.queries, dir.join("queries.bin"))?;
    let meta = Meta::new().with("seed", params.seed);
    io::write_qrels(&corpus.qrels, &meta, dir.join("qrels.tsv"))?;
    io::write_detections(&corpus.detections, dir.join("detections.jsonl"))?;
    let mut shift = String::new();
    meta.write_header(&mut shift);
    for (q, t) in &corpus.shift {
        shift.push_str(&format!("{q}\t{t:?}\n"));
    }
    io::write_file(&dir.join("shift.tsv"), shift)?;
    let config = serde_json::json!({
        "systems": [{"name": "cosine", "collection": "collection.bin", "queries": "queries.bin"}],
        "qrels": "qrels.tsv",
        "detections": "detections.jsonl",
        "seed": params.seed,
        "output_dir": "out",
    });
    let path = dir.join("bench.json");
    let mut text = serde_json::to_string_pretty(&config).expect("json value");
    text.push('\n');
    io::write_file(&path, text)?;
    Ok(path)
}
