//! Post-retrieval predictors, computed from the top-k list a system returns.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{EmbeddingStore, RankedList, RetrievalConfig, Similarity};
use crate::retrieval::{rank, rank_masked};

/// Default number of dimensions removed per iteration.
pub const DEFAULT_REMOVED_PER_STEP: usize = 50;
/// Default number of removal iterations.
pub const DEFAULT_REMOVAL_STEPS: usize = 15;

fn non_empty(ranked: &RankedList) -> Result<()> {
    if ranked.is_empty() {
        Err(Error::EmptyList)
    } else {
        Ok(())
    }
}

/// Hit rows sorted by collection id, so sums do not depend on list order.
fn canonical_rows(ranked: &RankedList, store: &EmbeddingStore) -> Vec<usize> {
    let mut rows: Vec<usize> = ranked.rows().collect();
    rows.sort_by(|&a, &b| store.id(a).cmp(store.id(b)));
    rows
}

fn mean_embedding(rows: &[usize], store: &EmbeddingStore) -> Vec<f64> {
    let mut mean = vec![0.0; store.dim()];
    for &r in rows {
        for (m, &v) in mean.iter_mut().zip(store.row(r)) {
            *m += v as f64;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Population variance of the similarity scores in the list.
pub fn score_variance(ranked: &RankedList) -> Result<f64> {
    non_empty(ranked)?;
    let mut scores: Vec<f64> = ranked.scores().collect();
    scores.sort_by(f64::total_cmp);
    // shifted by the first score so equal scores give exactly zero
    let shift = scores[0];
    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s - shift).sum::<f64>() / n;
    Ok(scores.iter().map(|s| (s - shift - mean).powi(2)).sum::<f64>() / n)
}

/// Mean squared Euclidean deviation of the retrieved embeddings from their
/// mean, `(1/k) * sum ||v_i - mean||^2`.
pub fn embedding_variance(ranked: &RankedList, store: &EmbeddingStore) -> Result<f64> {
    non_empty(ranked)?;
    let rows = canonical_rows(ranked, store);
    let base: Vec<f64> = store.row(rows[0]).iter().map(|&v| v as f64).collect();
    let centered = |r: usize| store.row(r).iter().zip(&base).map(|(&v, b)| v as f64 - b);
    let n = rows.len() as f64;
    let mut mean = vec![0.0; store.dim()];
    for &r in &rows {
        mean.iter_mut().zip(centered(r)).for_each(|(m, d)| *m += d);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let total: f64 = rows
        .iter()
        .map(|&r| centered(r).zip(&mean).map(|(d, m)| (d - m).powi(2)).sum::<f64>())
        .sum();
    Ok(total / rows.len() as f64)
}

fn similarity_to(v: &[f32], target: &[f64], sim: Similarity) -> f64 {
    match sim {
        Similarity::Cosine => {
            let (mut dot, mut nv, mut nt) = (0.0, 0.0, 0.0);
            for (&a, &b) in v.iter().zip(target) {
                let a = a as f64;
                dot += a * b;
                nv += a * a;
                nt += b * b;
            }
            if nv == 0.0 || nt == 0.0 {
                f64::NEG_INFINITY
            } else {
                dot / (nv.sqrt() * nt.sqrt())
            }
        }
        Similarity::NegEuclidean => -v
            .iter()
            .zip(target)
            .map(|(&a, b)| (a as f64 - b).powi(2))
            .sum::<f64>()
            .sqrt(),
    }
}

/// The retrieved row whose embedding is most similar to the mean of the
/// retrieved embeddings. Ties go to the smallest id.
pub fn median_image(ranked: &RankedList, store: &EmbeddingStore, sim: Similarity) -> Result<usize> {
    non_empty(ranked)?;
    let rows = canonical_rows(ranked, store);
    let mean = mean_embedding(&rows, store);
    let mut best = rows[0];
    let mut best_sim = similarity_to(store.row(best), &mean, sim);
    for &r in &rows[1..] {
        let s = similarity_to(store.row(r), &mean, sim);
        if s > best_sim {
            best = r;
            best_sim = s;
        }
    }
    Ok(best)
}

fn iou(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Overlap (IoU) between the original list and the list retrieved when the
/// median image is used as the query.
pub fn adapted_query_feedback(
    ranked: &RankedList,
    collection: &EmbeddingStore,
    cfg: &RetrievalConfig,
    ignore: &[usize],
) -> Result<f64> {
    let median = median_image(ranked, collection, cfg.similarity)?;
    let cfg = RetrievalConfig {
        k: ranked.len(),
        ..*cfg
    };
    let expanded = rank(
        &ranked.query_id,
        collection.row(median),
        collection,
        &cfg,
        ignore,
    )?;
    let a: BTreeSet<usize> = ranked.rows().collect();
    let b: BTreeSet<usize> = expanded.rows().collect();
    Ok(iou(&a, &b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureRemovalParams {
    /// Dimensions removed per iteration.
    pub per_step: usize,
    /// Number of removal iterations.
    pub steps: usize,
}

impl Default for FeatureRemovalParams {
    fn default() -> Self {
        Self {
            per_step: DEFAULT_REMOVED_PER_STEP,
            steps: DEFAULT_REMOVAL_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRemoval {
    /// |intersection| / |union| over the top-k sets of every iteration.
    pub score: f64,
    /// Removal iterations actually run.
    pub steps_run: usize,
    /// Set when the run stopped early because the next step would have
    /// removed every remaining dimension.
    pub exhausted: bool,
    /// Intersection size after each retrieval, starting with the full list.
    pub intersection_sizes: Vec<usize>,
}

/// Per-dimension sum of `query ⊙ v_i` over the given rows, over active
/// dimensions only.
pub(crate) fn dimension_scores(
    query: &[f32],
    rows: impl Iterator<Item = usize>,
    store: &EmbeddingStore,
    active: &[bool],
) -> Vec<f64> {
    let mut scores = vec![0.0; query.len()];
    for r in rows {
        for (d, (&q, &v)) in query.iter().zip(store.row(r)).enumerate() {
            if active[d] {
                scores[d] += q as f64 * v as f64;
            }
        }
    }
    scores
}

/// The `m` active dimensions with the highest score, ties to the lower index.
pub(crate) fn strongest_dimensions(scores: &[f64], active: &[bool], m: usize) -> Vec<usize> {
    let mut dims: Vec<usize> = (0..scores.len()).filter(|&d| active[d]).collect();
    dims.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    dims.truncate(m);
    dims
}

/// Repeatedly removes the dimensions that correlate most with the current
/// top-k results and re-ranks; scores how stable the retrieved set stays.
///
/// Removal acts on query and collection alike through a dimension mask, so
/// the shared store is never modified. Under cosine similarity the masked
/// vectors are effectively re-normalized; a vector with no remaining mass
/// can no longer be retrieved.
pub fn iterative_feature_removal(
    query_id: &str,
    query: &[f32],
    collection: &EmbeddingStore,
    cfg: &RetrievalConfig,
    ignore: &[usize],
    params: &FeatureRemovalParams,
) -> Result<FeatureRemoval> {
    if query.len() != collection.dim() {
        return Err(Error::DimensionMismatch {
            expected: collection.dim(),
            got: query.len(),
        });
    }
    if params.per_step == 0 {
        return Err(Error::InvalidArgument("must remove at least one dimension per step".into()));
    }
    let mut active = vec![true; collection.dim()];
    let retrieve = |active: &[bool]| {
        rank_masked(query_id, query, collection, cfg.similarity, cfg.k, ignore, Some(active))
    };
    let mut list = retrieve(&active);
    let mut intersection: BTreeSet<usize> = list.rows().collect();
    let mut union = intersection.clone();
    let mut sizes = vec![intersection.len()];
    let mut steps_run = 0;
    let mut exhausted = false;
    for _ in 0..params.steps {
        let remaining = active.iter().filter(|&&a| a).count();
        if remaining <= params.per_step {
            exhausted = true;
            break;
        }
        let scores = dimension_scores(query, list.rows(), collection, &active);
        for d in strongest_dimensions(&scores, &active, params.per_step) {
            active[d] = false;
        }
        list = retrieve(&active);
        let current: BTreeSet<usize> = list.rows().collect();
        intersection.retain(|r| current.contains(r));
        union.extend(current);
        debug_assert!(intersection.len() <= *sizes.last().unwrap());
        sizes.push(intersection.len());
        steps_run += 1;
    }
    let score = if union.is_empty() {
        1.0
    } else {
        intersection.len() as f64 / union.len() as f64
    };
    Ok(FeatureRemoval {
        score,
        steps_run,
        exhausted,
        intersection_sizes: sizes,
    })
}
