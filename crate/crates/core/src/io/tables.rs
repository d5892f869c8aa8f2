//! Ranked-list and effectiveness TSV files.

use std::collections::BTreeMap;
use std::path::Path;

use super::{fmt_f64, parse_f64, read_to_string, split_header, write_file, Meta};
use crate::error::{Error, Result};
use crate::model::{EffectivenessTable, EmbeddingStore, Hit, Measure, RankedList};

/// `query_id \t rank \t doc_id \t score`, ranks starting at 1.
pub fn write_ranked_lists(
    lists: &[RankedList],
    collection: &EmbeddingStore,
    meta: &Meta,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::new();
    meta.write_header(&mut out);
    for list in lists {
        for (i, hit) in list.hits.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                list.query_id,
                i + 1,
                collection.id(hit.row),
                fmt_f64(hit.score)
            ));
        }
    }
    write_file(path.as_ref(), out)
}

pub fn load_ranked_lists(path: impl AsRef<Path>, collection: &EmbeddingStore) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let (_, rows) = split_header(&text);
    let mut lists: Vec<RankedList> = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split('\t').collect();
        let [query, rank, doc, score] = fields[..] else {
            return Err(Error::format(path, format!("line {line}: expected 4 fields")));
        };
        let row = collection
            .position(doc)
            .ok_or_else(|| Error::UnknownDocId(doc.to_string()))?;
        let score = parse_f64(path, line, score)?;
        if lists.last().is_none_or(|l| l.query_id != query) {
            lists.push(RankedList { query_id: query.to_string(), hits: Vec::new() });
        }
        let list = lists.last_mut().unwrap();
        if rank.trim().parse::<usize>().ok() != Some(list.hits.len() + 1) {
            return Err(Error::format(path, format!("line {line}: rank `{rank}` out of sequence")));
        }
        list.hits.push(Hit { row, score });
    }
    Ok(lists)
}

pub fn write_effectiveness(table: &EffectivenessTable, meta: &Meta, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    meta.clone().with("measure", table.measure).write_header(&mut out);
    for (q, v) in table.values() {
        out.push_str(&format!("{q}\t{}\n", fmt_f64(*v)));
    }
    write_file(path.as_ref(), out)
}

pub fn load_effectiveness(path: impl AsRef<Path>) -> Result<EffectivenessTable> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let (meta, rows) = split_header(&text);
    let measure: Measure = meta
        .get("measure")
        .ok_or_else(|| Error::format(path, "missing `# measure=` header"))?
        .parse()?;
    let mut values = BTreeMap::new();
    for (line, row) in rows {
        let (q, v) = row
            .split_once('\t')
            .ok_or_else(|| Error::format(path, format!("line {line}: expected `query\\tvalue`")))?;
        if values.insert(q.to_string(), parse_f64(path, line, v)?).is_some() {
            return Err(Error::format(path, format!("line {line}: duplicate query `{q}`")));
        }
    }
    EffectivenessTable::new(measure, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranked_lists_round_trip() {
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let store = EmbeddingStore::from_rows(ids, &[[1.0f32], [2.0], [3.0]]).unwrap();
        let lists = vec![
            RankedList { query_id: "q1".into(), hits: vec![Hit { row: 2, score: 0.9 }, Hit { row: 0, score: 0.1 }] },
            RankedList { query_id: "q2".into(), hits: vec![Hit { row: 1, score: -1.5 }] },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ranked.tsv");
        write_ranked_lists(&lists, &store, &Meta::new(), &p).unwrap();
        assert_eq!(load_ranked_lists(&p, &store).unwrap(), lists);
    }

    #[test]
    fn effectiveness_round_trip() {
        let t = EffectivenessTable::new(
            Measure::PrecisionAt(100),
            BTreeMap::from([("q1".to_string(), 0.41), ("q2".to_string(), 1.0)]),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.tsv");
        write_effectiveness(&t, &Meta::new().with("seed", 1), &p).unwrap();
        assert_eq!(load_effectiveness(&p).unwrap(), t);
    }
}
