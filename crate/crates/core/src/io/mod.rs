//! File formats shared by the engine, its CLI and external score producers.
//!
//! Text formats are TSV or JSONL with `# key=value` header comments; binary
//! formats start with an 8-byte magic. Writers are deterministic: the same
//! input always yields the same bytes.

mod binfmt;
mod detections;
mod embeddings;
mod folds;
mod matrix;
mod qrels;
mod report;
mod scores;
mod tables;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub(crate) use binfmt::{BinReader, BinWriter};
pub use detections::{load_detections, write_detections, BoundingBox, DetectionFile};
pub use embeddings::{
    load_embeddings, read_embeddings_binary, read_embeddings_jsonl, write_embeddings_binary,
    write_embeddings_jsonl, EMBEDDING_MAGIC,
};
pub use folds::{load_folds, write_folds};
pub use matrix::{load_similarity_matrices, write_similarity_matrices, MATRIX_MAGIC};
pub use qrels::{load_qrels, load_qrels_with, write_qrels, LabelMapping};
pub use report::{load_report, write_plot_data, write_report, write_report_csv, UNDEFINED};
pub use scores::{load_scores, parse_scores, write_scores};
pub use tables::{
    load_effectiveness, load_ranked_lists, write_effectiveness, write_ranked_lists,
};

use crate::error::{Error, Result};

/// Provenance recorded in every artifact: config hash, seed and similar
/// key/value pairs. Keys are written in sorted order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Meta(pub BTreeMap<String, String>);

impl Meta {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub(crate) fn write_header(&self, out: &mut String) {
        for (k, v) in &self.0 {
            out.push_str(&format!("# {k}={v}\n"));
        }
    }

    /// Single-line `k=v;k=v` form used inside binary files.
    pub(crate) fn to_line(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub(crate) fn from_line(line: &str) -> Self {
        Meta(
            line.split(';')
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

/// Splits a text file into `# key=value` header entries and data lines
/// (with their 1-based line numbers). Blank lines are skipped.
pub(crate) fn split_header(text: &str) -> (Meta, Vec<(usize, &str)>) {
    let mut meta = Meta::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                meta.0.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else if !line.trim().is_empty() {
            rows.push((i + 1, line));
        }
    }
    (meta, rows)
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::format(path, format!("line {line}: `{field}` is not a number")))
}
