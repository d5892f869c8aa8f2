//! Shared data types: embedding stores, relevance judgments, ranked lists,
//! predictor outputs and effectiveness tables.
//!
//! Everything here is immutable once constructed; constructors enforce the
//! invariants that the rest of the crate relies on.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cutoff for post-retrieval predictors and P@k.
pub const DEFAULT_K: usize = 100;

/// Tolerance on row norms for a store to count as unit-L2.
pub const NORM_TOLERANCE: f64 = 1e-5;

/// A single problem found by [`validate_store`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyIds,
    ZeroDim,
    EmptyId(usize),
    DuplicateId(String),
    /// `row` is `None` when the number of rows differs from the number of ids.
    DimensionMismatch {
        row: Option<usize>,
        expected: usize,
        got: usize,
    },
    NonFiniteValue { id: String, column: usize },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyIds | Violation::ZeroDim | Violation::EmptyId(_) => "INVALID_STORE",
            Violation::DuplicateId(_) => "DUPLICATE_ID",
            Violation::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Violation::NonFiniteValue { .. } => "NON_FINITE_VALUE",
        }
    }
}

/// Checks every store invariant and reports all violations found.
///
/// Never panics; an empty result means the parts form a valid store.
pub fn validate_store<R: AsRef<[f32]>>(ids: &[String], dim: usize, rows: &[R]) -> Vec<Violation> {
    let mut out = Vec::new();
    if ids.is_empty() {
        out.push(Violation::EmptyIds);
    }
    if dim == 0 {
        out.push(Violation::ZeroDim);
    }
    let mut seen = HashSet::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if id.is_empty() {
            out.push(Violation::EmptyId(i));
        }
        if !seen.insert(id.as_str()) {
            out.push(Violation::DuplicateId(id.clone()));
        }
    }
    if rows.len() != ids.len() {
        out.push(Violation::DimensionMismatch {
            row: None,
            expected: ids.len(),
            got: rows.len(),
        });
    }
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != dim {
            out.push(Violation::DimensionMismatch {
                row: Some(i),
                expected: dim,
                got: row.len(),
            });
        }
        if let Some(column) = row.iter().position(|v| !v.is_finite()) {
            let id = ids.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
            out.push(Violation::NonFiniteValue { id, column });
        }
    }
    out
}

/// Id-indexed matrix of 32-bit embeddings, one row per id.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.dim == other.dim && self.data == other.data
    }
}

impl EmbeddingStore {
    pub fn from_rows<R: AsRef<[f32]>>(ids: Vec<String>, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if let Some(v) = validate_store(&ids, dim, rows).into_iter().next() {
            return Err(v.into());
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for r in rows {
            data.extend_from_slice(r.as_ref());
        }
        Ok(Self::assemble(ids, dim, data))
    }

    /// Builds a store from a row-major buffer of `ids.len() * dim` values.
    pub fn from_flat(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Violation::ZeroDim.into());
        }
        if data.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                got: data.len(),
            });
        }
        let rows: Vec<&[f32]> = data.chunks(dim).collect();
        if let Some(v) = validate_store(&ids, dim, &rows).into_iter().next() {
            return Err(v.into());
        }
        Ok(Self::assemble(ids, dim, data))
    }

    fn assemble(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let normalized = data
            .chunks(dim)
            .all(|row| (l2_norm(row) - 1.0).abs() <= NORM_TOLERANCE);
        Self {
            ids,
            index,
            dim,
            data,
            normalized,
        }
    }

    /// Copy with every row scaled to unit L2 norm. Zero rows are rejected.
    pub fn to_unit_norm(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.data.len());
        for (id, row) in self.ids.iter().zip(self.data.chunks(self.dim)) {
            let norm = l2_norm(row);
            if norm == 0.0 {
                return Err(Error::ZeroVector(id.clone()));
            }
            data.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
        }
        Ok(Self::assemble(self.ids.clone(), self.dim, data))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Whether every row norm is within [`NORM_TOLERANCE`] of 1.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

pub(crate) fn l2_norm(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

/// Relevance of one collection item to one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Relevant,
    NonRelevant,
    /// Removed from the candidate pool before ranking and scoring.
    Ignore,
}

/// Per-query relevance labels over collection ids. Unlisted pairs are
/// non-relevant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, Label>>,
}

impl Qrels {
    /// Validates judgments against the collection they refer to.
    pub fn new(
        judgments: BTreeMap<String, BTreeMap<String, Label>>,
        collection: &EmbeddingStore,
    ) -> Result<Self> {
        for (query, docs) in &judgments {
            if let Some(doc) = docs.keys().find(|d| collection.position(d).is_none()) {
                return Err(Error::UnknownDocId(doc.clone()));
            }
            if !docs.values().any(|&l| l == Label::Relevant) {
                return Err(Error::EmptyRelevantSet(query.clone()));
            }
        }
        Ok(Self { judgments })
    }

    /// Query ids in ascending order.
    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn judgments(&self) -> &BTreeMap<String, BTreeMap<String, Label>> {
        &self.judgments
    }

    pub fn label(&self, query: &str, doc: &str) -> Label {
        self.judgments
            .get(query)
            .and_then(|d| d.get(doc))
            .copied()
            .unwrap_or(Label::NonRelevant)
    }

    pub fn relevant_count(&self, query: &str) -> usize {
        self.judgments
            .get(query)
            .map(|d| d.values().filter(|&&l| l == Label::Relevant).count())
            .unwrap_or(0)
    }

    /// Collection rows marked IGNORE for `query`, ascending.
    pub fn ignored_rows(&self, query: &str, collection: &EmbeddingStore) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .judgments
            .get(query)
            .into_iter()
            .flat_map(|d| d.iter())
            .filter(|(_, &l)| l == Label::Ignore)
            .filter_map(|(doc, _)| collection.position(doc))
            .collect();
        rows.sort_unstable();
        rows
    }

    /// Per-row relevance flags for `query`, indexed like the collection.
    pub fn relevant_mask(&self, query: &str, collection: &EmbeddingStore) -> Vec<bool> {
        let mut mask = vec![false; collection.len()];
        if let Some(docs) = self.judgments.get(query) {
            for (doc, &label) in docs {
                if label == Label::Relevant {
                    if let Some(row) = collection.position(doc) {
                        mask[row] = true;
                    }
                }
            }
        }
        mask
    }
}

/// Similarity function used to rank the collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Similarity {
    /// Dot product of L2-normalized vectors.
    #[default]
    Cosine,
    /// Negative Euclidean distance.
    NegEuclidean,
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Cosine => "COSINE",
            Similarity::NegEuclidean => "NEG_EUCLIDEAN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub similarity: Similarity,
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            similarity: Similarity::Cosine,
            k: DEFAULT_K,
        }
    }
}

impl RetrievalConfig {
    pub fn new(similarity: Similarity, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("retrieval cutoff k must be >= 1".into()));
        }
        Ok(Self { similarity, k })
    }
}

/// One retrieved collection row and its similarity to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub row: usize,
    pub score: f64,
}

/// Retrieved rows ordered by (score desc, id asc).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.hits.iter().map(|h| h.row)
    }

    pub fn scores(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.hits.iter().map(|h| h.score)
    }

    /// The first `k` hits.
    pub fn prefix(&self, k: usize) -> RankedList {
        RankedList {
            query_id: self.query_id.clone(),
            hits: self.hits[..k.min(self.hits.len())].to_vec(),
        }
    }
}

/// Sign convention of a predictor's scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Orientation {
    HigherIsBetter,
    HigherIsHarder,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::HigherIsBetter => "HIGHER_IS_BETTER",
            Orientation::HigherIsHarder => "HIGHER_IS_HARDER",
        })
    }
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "HIGHER_IS_BETTER" => Ok(Orientation::HigherIsBetter),
            "HIGHER_IS_HARDER" => Ok(Orientation::HigherIsHarder),
            other => Err(format!("unknown orientation `{other}`")),
        }
    }
}

/// Per-query scores emitted by one predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorOutput {
    pub name: String,
    pub orientation: Orientation,
    scores: BTreeMap<String, f64>,
}

impl PredictorOutput {
    pub fn new(
        name: impl Into<String>,
        orientation: Orientation,
        scores: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if let Some((id, _)) = scores.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                id: id.clone(),
                column: 0,
            });
        }
        Ok(Self {
            name: name.into(),
            orientation,
            scores,
        })
    }

    pub fn scores(&self) -> &BTreeMap<String, f64> {
        &self.scores
    }

    pub fn get(&self, query: &str) -> Option<f64> {
        self.scores.get(query).copied()
    }
}

/// Ground-truth effectiveness measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    AveragePrecision,
    PrecisionAt(usize),
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::AveragePrecision => f.write_str("AP"),
            Measure::PrecisionAt(k) => write!(f, "P@{k}"),
        }
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        if upper == "AP" {
            return Ok(Measure::AveragePrecision);
        }
        upper
            .strip_prefix("P@")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k > 0)
            .map(Measure::PrecisionAt)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown measure `{s}`")))
    }
}

impl Serialize for Measure {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-query ground-truth effectiveness, every value in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessTable {
    pub measure: Measure,
    values: BTreeMap<String, f64>,
}

impl EffectivenessTable {
    pub fn new(measure: Measure, values: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((id, v)) = values.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "effectiveness of `{id}` is {v}, outside [0, 1]"
            )));
        }
        Ok(Self { measure, values })
    }

    pub fn values(&self) -> &BTreeMap<String, f64> {
        &self.values
    }

    pub fn get(&self, query: &str) -> Option<f64> {
        self.values.get(query).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn well_formed_store_validates() {
        let rows = vec![vec![0.0f32; 4]; 3];
        assert!(validate_store(&ids(3), 4, &rows).is_empty());
    }

    #[test]
    fn row_count_mismatch() {
        let rows = vec![vec![0.0f32; 4]; 2];
        let v = validate_store(&ids(3), 4, &rows);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code(), "DIMENSION_MISMATCH");
    }

    #[test]
    fn non_finite_entry() {
        let rows = vec![vec![0.0, 1.0], vec![f32::NAN, 0.0], vec![1.0, f32::INFINITY]];
        let v = validate_store(&ids(3), 2, &rows);
        assert_eq!(
            v,
            vec![
                Violation::NonFiniteValue { id: "d1".into(), column: 0 },
                Violation::NonFiniteValue { id: "d2".into(), column: 1 },
            ]
        );
        let err = EmbeddingStore::from_rows(ids(3), &rows).unwrap_err();
        assert_eq!(err.code(), "NON_FINITE_VALUE");
    }

    #[test]
    fn collects_every_violation() {
        let ids = vec!["a".to_string(), "a".to_string(), String::new()];
        let rows = vec![vec![1.0f32, 2.0], vec![1.0]];
        let codes: Vec<_> = validate_store(&ids, 2, &rows).iter().map(|v| v.code()).collect();
        assert_eq!(
            codes,
            ["DUPLICATE_ID", "INVALID_STORE", "DIMENSION_MISMATCH", "DIMENSION_MISMATCH"]
        );
    }

    #[test]
    fn normalized_flag_measured() {
        let s = EmbeddingStore::from_rows(ids(2), &[vec![1.0f32, 0.0], vec![0.6, 0.8]]).unwrap();
        assert!(s.is_normalized());
        let s = EmbeddingStore::from_rows(ids(2), &[vec![2.0f32, 0.0], vec![0.6, 0.8]]).unwrap();
        assert!(!s.is_normalized());
        let n = s.to_unit_norm().unwrap();
        assert!(n.is_normalized());
        assert_eq!(n.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn zero_rows_cannot_be_normalized() {
        let s = EmbeddingStore::from_rows(ids(2), &[vec![0.0f32, 0.0], vec![0.6, 0.8]]).unwrap();
        assert_eq!(s.to_unit_norm().unwrap_err().code(), "ZERO_VECTOR");
    }

    #[test]
    fn qrels_defaults_and_rejections() {
        let store = EmbeddingStore::from_rows(ids(3), &[vec![1.0f32], vec![2.0], vec![3.0]]).unwrap();
        let mut j = BTreeMap::new();
        j.insert(
            "q1".to_string(),
            BTreeMap::from([
                ("d0".to_string(), Label::Relevant),
                ("d2".to_string(), Label::Ignore),
            ]),
        );
        let q = Qrels::new(j.clone(), &store).unwrap();
        assert_eq!(q.label("q1", "d1"), Label::NonRelevant);
        assert_eq!(q.relevant_count("q1"), 1);
        assert_eq!(q.ignored_rows("q1", &store), vec![2]);

        j.get_mut("q1").unwrap().insert("zz".into(), Label::NonRelevant);
        assert_eq!(Qrels::new(j.clone(), &store).unwrap_err().code(), "UNKNOWN_DOC_ID");

        let only_neg = BTreeMap::from([(
            "q2".to_string(),
            BTreeMap::from([("d1".to_string(), Label::NonRelevant)]),
        )]);
        assert_eq!(Qrels::new(only_neg, &store).unwrap_err().code(), "EMPTY_RELEVANT_SET");
    }

    #[test]
    fn measure_names() {
        assert_eq!("p@100".parse::<Measure>().unwrap(), Measure::PrecisionAt(100));
        assert_eq!("AP".parse::<Measure>().unwrap(), Measure::AveragePrecision);
        assert_eq!(Measure::PrecisionAt(100).to_string(), "P@100");
        assert!("P@0".parse::<Measure>().is_err());
    }
}
