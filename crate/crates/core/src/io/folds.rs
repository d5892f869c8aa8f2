//! Fold assignments, TSV `query_id \t fold_index`.

use std::collections::BTreeMap;
use std::path::Path;

use super::{read_to_string, split_header, write_file, Meta};
use crate::error::{Error, Result};

pub fn write_folds(folds: &BTreeMap<String, usize>, meta: &Meta, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    meta.write_header(&mut out);
    for (q, f) in folds {
        out.push_str(&format!("{q}\t{f}\n"));
    }
    write_file(path.as_ref(), out)
}

pub fn load_folds(path: impl AsRef<Path>) -> Result<BTreeMap<String, usize>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let (_, rows) = split_header(&text);
    let mut folds = BTreeMap::new();
    for (line, row) in rows {
        let (q, f) = row
            .split_once('\t')
            .ok_or_else(|| Error::format(path, format!("line {line}: expected `query\\tfold`")))?;
        let f: usize = f
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("line {line}: bad fold index `{f}`")))?;
        if folds.insert(q.to_string(), f).is_some() {
            return Err(Error::format(path, format!("line {line}: duplicate query `{q}`")));
        }
    }
    Ok(folds)
}
