//! Exact top-k retrieval over an [`EmbeddingStore`] and the ground-truth
//! effectiveness measures (AP, P@k).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{
    EffectivenessTable, EmbeddingStore, Hit, Measure, Qrels, RankedList, RetrievalConfig,
    Similarity,
};
use crate::par;

/// Similarity of two equal-length vectors, accumulated in f64.
///
/// Cosine of a zero vector is `-inf`, which [`rank`] treats as "never
/// retrievable".
pub fn similarity(a: &[f32], b: &[f32], sim: Similarity) -> f64 {
    similarity_masked(a, b, sim, None)
}

/// Similarity restricted to the dimensions where `active` is true.
pub(crate) fn similarity_masked(
    a: &[f32],
    b: &[f32],
    sim: Similarity,
    active: Option<&[bool]>,
) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let keep = |i: usize| active.is_none_or(|m| m[i]);
    match sim {
        Similarity::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
            for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
                if keep(i) {
                    let (x, y) = (x as f64, y as f64);
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
            }
            if na == 0.0 || nb == 0.0 {
                f64::NEG_INFINITY
            } else {
                dot / (na.sqrt() * nb.sqrt())
            }
        }
        Similarity::NegEuclidean => {
            let mut sq = 0.0f64;
            for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
                if keep(i) {
                    let d = x as f64 - y as f64;
                    sq += d * d;
                }
            }
            -sq.sqrt()
        }
    }
}

fn hit_order(ids: &[String]) -> impl Fn(&Hit, &Hit) -> Ordering + '_ {
    move |a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| ids[a.row].cmp(&ids[b.row]))
    }
}

/// Ranks the collection against `query` and keeps the top `cfg.k` rows.
///
/// `ignore` lists collection rows removed from the candidate pool. Ties are
/// broken by ascending collection id, so the output is fully deterministic.
pub fn rank(
    query_id: &str,
    query: &[f32],
    collection: &EmbeddingStore,
    cfg: &RetrievalConfig,
    ignore: &[usize],
) -> Result<RankedList> {
    if query.len() != collection.dim() {
        return Err(Error::DimensionMismatch {
            expected: collection.dim(),
            got: query.len(),
        });
    }
    if let Some(bad) = query.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            id: query_id.to_string(),
            column: bad,
        });
    }
    Ok(rank_masked(
        query_id,
        query,
        collection,
        cfg.similarity,
        cfg.k,
        ignore,
        None,
    ))
}

pub(crate) fn rank_masked(
    query_id: &str,
    query: &[f32],
    collection: &EmbeddingStore,
    sim: Similarity,
    k: usize,
    ignore: &[usize],
    active: Option<&[bool]>,
) -> RankedList {
    let mut skip = vec![false; collection.len()];
    for &row in ignore {
        skip[row] = true;
    }
    let mut hits: Vec<Hit> = collection
        .rows()
        .enumerate()
        .filter(|(row, _)| !skip[*row])
        .map(|(row, v)| Hit {
            row,
            score: similarity_masked(query, v, sim, active),
        })
        .filter(|h| h.score != f64::NEG_INFINITY)
        .collect();
    let order = hit_order(collection.ids());
    if k < hits.len() {
        if k > 0 {
            hits.select_nth_unstable_by(k - 1, &order);
        }
        hits.truncate(k);
    }
    hits.sort_unstable_by(&order);
    RankedList {
        query_id: query_id.to_string(),
        hits,
    }
}

/// Ranks every listed query; output order follows `query_ids`.
pub fn rank_queries(
    query_ids: &[String],
    queries: &EmbeddingStore,
    collection: &EmbeddingStore,
    cfg: &RetrievalConfig,
    qrels: &Qrels,
) -> Result<Vec<RankedList>> {
    par::map(query_ids, |qid| {
        let v = queries
            .get(qid)
            .ok_or_else(|| Error::UnknownQueryId(qid.clone()))?;
        rank(qid, v, collection, cfg, &qrels.ignored_rows(qid, collection))
    })
    .into_iter()
    .collect()
}

fn relevance_flags(ranked: &RankedList, qrels: &Qrels, collection: &EmbeddingStore) -> Vec<bool> {
    let mask = qrels.relevant_mask(&ranked.query_id, collection);
    ranked.rows().map(|r| mask[r]).collect()
}

/// Average precision of a full-collection ranking:
/// `(1/R) * sum over relevant ranks i of (relevant in top i) / i`.
pub fn average_precision(
    ranked: &RankedList,
    qrels: &Qrels,
    collection: &EmbeddingStore,
) -> Result<f64> {
    let total = qrels.relevant_count(&ranked.query_id);
    if total == 0 {
        return Err(Error::EmptyRelevantSet(ranked.query_id.clone()));
    }
    Ok(average_precision_of(&relevance_flags(ranked, qrels, collection), total))
}

pub(crate) fn average_precision_of(flags: &[bool], total_relevant: usize) -> f64 {
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in flags.iter().enumerate() {
        if rel {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    sum / total_relevant as f64
}

/// Relevant items in the top `k` divided by `k`, even when fewer than `k`
/// items were retrieved.
pub fn precision_at_k(
    ranked: &RankedList,
    qrels: &Qrels,
    collection: &EmbeddingStore,
    k: usize,
) -> Result<f64> {
    if qrels.relevant_count(&ranked.query_id) == 0 {
        return Err(Error::EmptyRelevantSet(ranked.query_id.clone()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("P@k needs k >= 1".into()));
    }
    let flags = relevance_flags(ranked, qrels, collection);
    let hits = flags.iter().take(k).filter(|&&f| f).count();
    Ok(hits as f64 / k as f64)
}

/// Ground-truth table for `measure` from full-collection rankings.
pub fn effectiveness(
    measure: Measure,
    rankings: &[RankedList],
    qrels: &Qrels,
    collection: &EmbeddingStore,
) -> Result<EffectivenessTable> {
    let mut values = BTreeMap::new();
    for ranked in rankings {
        let v = match measure {
            Measure::AveragePrecision => average_precision(ranked, qrels, collection)?,
            Measure::PrecisionAt(k) => precision_at_k(ranked, qrels, collection, k)?,
        };
        values.insert(ranked.query_id.clone(), v);
    }
    EffectivenessTable::new(measure, values)
}

/// Pairwise similarities between the items of one ranked list.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub query_id: String,
    pub size: usize,
    /// Row-major `size * size` values.
    pub values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }
}

pub fn similarity_matrix(
    ranked: &RankedList,
    collection: &EmbeddingStore,
    sim: Similarity,
) -> Result<SimilarityMatrix> {
    let n = ranked.len();
    if let Some(h) = ranked.hits.iter().find(|h| h.row >= collection.len()) {
        return Err(Error::InvalidArgument(format!(
            "ranked row {} is outside the collection",
            h.row
        )));
    }
    let rows: Vec<&[f32]> = ranked.rows().map(|r| collection.row(r)).collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = similarity(rows[i], rows[j], sim);
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix {
        query_id: ranked.query_id.clone(),
        size: n,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store(rows: &[&[f32]]) -> EmbeddingStore {
        let ids = (0..rows.len()).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
        EmbeddingStore::from_rows(ids, rows).unwrap()
    }

    fn cfg(sim: Similarity, k: usize) -> RetrievalConfig {
        RetrievalConfig::new(sim, k).unwrap()
    }

    #[test]
    fn orthogonal_case() {
        let s = store(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = rank("q", &[1.0, 0.0], &s, &cfg(Similarity::Cosine, 2), &[]).unwrap();
        assert_eq!(r.hits, vec![Hit { row: 0, score: 1.0 }, Hit { row: 1, score: 0.0 }]);
        let r = rank("q", &[1.0, 0.0], &s, &cfg(Similarity::Cosine, 2), &[0]).unwrap();
        assert_eq!(r.hits, vec![Hit { row: 1, score: 0.0 }]);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let s = store(&[&[1.0, 0.0]]);
        let e = rank("q", &[1.0], &s, &cfg(Similarity::Cosine, 1), &[]).unwrap_err();
        assert_eq!(e.code(), "DIMENSION_MISMATCH");
    }

    #[test]
    fn ties_broken_by_id() {
        let ids = vec!["z".to_string(), "m".to_string(), "a".to_string()];
        let s = EmbeddingStore::from_rows(ids, &[[1.0f32], [1.0], [1.0]]).unwrap();
        let r = rank("q", &[1.0], &s, &cfg(Similarity::NegEuclidean, 2), &[]).unwrap();
        assert_eq!(r.rows().collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f32>> = (0..50)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ids = (0..50).map(|i| format!("doc{i:02}")).collect();
        let s = EmbeddingStore::from_rows(ids, &rows).unwrap();
        for sim in [Similarity::Cosine, Similarity::NegEuclidean] {
            let q: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut all: Vec<(f64, usize)> =
                rows.iter().enumerate().map(|(i, r)| (similarity(&q, r, sim), i)).collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let r = rank("q", &q, &s, &cfg(sim, 10), &[]).unwrap();
            let want: Vec<usize> = all[..10].iter().map(|p| p.1).collect();
            assert_eq!(r.rows().collect::<Vec<_>>(), want);
        }
    }

    fn qrels_for(store: &EmbeddingStore, relevant: &[usize]) -> Qrels {
        let docs = relevant
            .iter()
            .map(|&r| (store.id(r).to_string(), Label::Relevant))
            .collect();
        Qrels::new(BTreeMap::from([("q".to_string(), docs)]), store).unwrap()
    }

    fn ranked(rows: &[usize]) -> RankedList {
        RankedList {
            query_id: "q".into(),
            hits: rows.iter().map(|&row| Hit { row, score: 0.0 }).collect(),
        }
    }

    #[test]
    fn average_precision_examples() {
        let s = store(&[&[1.0], &[1.0], &[1.0]]);
        let perfect = qrels_for(&s, &[0, 1]);
        assert_eq!(average_precision(&ranked(&[0, 1, 2]), &perfect, &s).unwrap(), 1.0);
        let q = qrels_for(&s, &[0, 2]);
        assert_relative_eq!(
            average_precision(&ranked(&[0, 1, 2]), &q, &s).unwrap(),
            0.5 * (1.0 + 2.0 / 3.0),
            epsilon = 1e-15
        );
        let q = qrels_for(&s, &[2]);
        assert_relative_eq!(
            average_precision(&ranked(&[0, 1, 2]), &q, &s).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn precision_divides_by_k() {
        let rows: Vec<[f32; 1]> = (0..50).map(|i| [i as f32]).collect();
        let ids = (0..50).map(|i| format!("d{i:02}")).collect();
        let s = EmbeddingStore::from_rows(ids, &rows).unwrap();
        let all: Vec<usize> = (0..50).collect();
        let q = qrels_for(&s, &all);
        assert_eq!(precision_at_k(&ranked(&all), &q, &s, 100).unwrap(), 0.5);
        let q = qrels_for(&s, &[49]);
        assert_eq!(precision_at_k(&ranked(&all[..10]), &q, &s, 100).unwrap(), 0.0);
    }

    #[test]
    fn similarity_matrix_cases() {
        let s = store(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let m = similarity_matrix(&ranked(&[0, 1]), &s, Similarity::Cosine).unwrap();
        assert_eq!(m.values, vec![1.0, 1.0, 1.0, 1.0]);
        let m = similarity_matrix(&ranked(&[0, 2]), &s, Similarity::Cosine).unwrap();
        assert_eq!(m.values, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn similarity_matrix_matches_pairwise_dots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f32>> = (0..5)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let s = EmbeddingStore::from_rows((0..5).map(|i| i.to_string()).collect(), &rows)
            .unwrap()
            .to_unit_norm()
            .unwrap();
        let m = similarity_matrix(&ranked(&[0, 1, 2, 3, 4]), &s, Similarity::Cosine).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = s.row(i).iter().zip(s.row(j)).map(|(&a, &b)| a as f64 * b as f64).sum();
                assert!((m.get(i, j) - dot).abs() < 1e-6);
                assert!((m.get(i, j) - m.get(j, i)).abs() <= 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn rank_ignores_storage_order(seed in any::<u64>(), k in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 30;
            let rows: Vec<Vec<f32>> = (0..n)
                .map(|_| (0..4).map(|_| rng.random_range(-2i32..3) as f32).collect())
                .collect();
            let ids: Vec<String> = (0..n).map(|i| format!("id{i:02}")).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let a = EmbeddingStore::from_rows(ids.clone(), &rows).unwrap();
            let b = EmbeddingStore::from_rows(
                perm.iter().map(|&p| ids[p].clone()).collect(),
                &perm.iter().map(|&p| rows[p].clone()).collect::<Vec<_>>(),
            ).unwrap();
            let q = [1.0f32, -1.0, 0.5, 2.0];
            for sim in [Similarity::Cosine, Similarity::NegEuclidean] {
                let ra = rank("q", &q, &a, &cfg(sim, k), &[]).unwrap();
                let rb = rank("q", &q, &b, &cfg(sim, k), &[]).unwrap();
                let ia: Vec<&str> = ra.rows().map(|r| a.id(r)).collect();
                let ib: Vec<&str> = rb.rows().map(|r| b.id(r)).collect();
                prop_assert_eq!(ia, ib);
            }
        }

        #[test]
        fn ap_is_one_iff_relevant_first(flags in proptest::collection::vec(any::<bool>(), 1..40)) {
            prop_assume!(flags.iter().any(|&f| f));
            let total = flags.iter().filter(|&&f| f).count();
            let ap = average_precision_of(&flags, total);
            let sorted = flags.windows(2).all(|w| w[0] || !w[1]);
            prop_assert_eq!(ap == 1.0, sorted);
            prop_assert!((0.0..=1.0).contains(&ap));
        }
    }
}
