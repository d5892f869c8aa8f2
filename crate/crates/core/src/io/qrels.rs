//! Qrels TSV: `query_id \t doc_id \t label`, with `#` comment lines.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{read_to_string, split_header, write_file, Meta};
use crate::error::{Error, Result};
use crate::model::{EmbeddingStore, Label, Qrels};

/// Maps integer labels in the file to [`Label`]s. The default is
/// `1 -> RELEVANT, 0 -> NONRELEVANT, -1 -> IGNORE`; datasets with graded or
/// multi-track labels can supply their own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping(pub HashMap<i64, Label>);

impl Default for LabelMapping {
    fn default() -> Self {
        Self(HashMap::from([
            (1, Label::Relevant),
            (0, Label::NonRelevant),
            (-1, Label::Ignore),
        ]))
    }
}

pub fn load_qrels(path: impl AsRef<Path>, collection: &EmbeddingStore) -> Result<Qrels> {
    load_qrels_with(path, collection, &LabelMapping::default())
}

pub fn load_qrels_with(
    path: impl AsRef<Path>,
    collection: &EmbeddingStore,
    mapping: &LabelMapping,
) -> Result<Qrels> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let (_, rows) = split_header(&text);
    let mut judgments: BTreeMap<String, BTreeMap<String, Label>> = BTreeMap::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split('\t').collect();
        let [query, doc, label] = fields[..] else {
            return Err(Error::format(
                path,
                format!("line {line}: expected 3 tab-separated fields, got {}", fields.len()),
            ));
        };
        let label = label
            .trim()
            .parse::<i64>()
            .ok()
            .and_then(|l| mapping.0.get(&l).copied())
            .ok_or_else(|| Error::UnknownLabel {
                label: label.trim().to_string(),
                line,
            })?;
        let previous = judgments
            .entry(query.trim().to_string())
            .or_default()
            .insert(doc.trim().to_string(), label);
        if previous.is_some() {
            return Err(Error::format(
                path,
                format!("line {line}: duplicate judgment for ({query}, {doc})"),
            ));
        }
    }
    Qrels::new(judgments, collection)
}

pub fn write_qrels(qrels: &Qrels, meta: &Meta, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    meta.write_header(&mut out);
    for (query, docs) in qrels.judgments() {
        for (doc, label) in docs {
            let code = match label {
                Label::Relevant => 1,
                Label::NonRelevant => 0,
                Label::Ignore => -1,
            };
            out.push_str(&format!("{query}\t{doc}\t{code}\n"));
        }
    }
    write_file(path.as_ref(), out)
}
