//! Embedding files.
//!
//! Binary layout: magic `IQPPEMB1`, u32 dim, u64 count, `count` ids as u16
//! length-prefixed UTF-8, then `count * dim` f32 values, all little-endian.
//! The JSONL alternative holds one `{"id": str, "v": [floats]}` per line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_file, BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::model::EmbeddingStore;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"IQPPEMB1";

/// Loads either format, chosen by sniffing the magic.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        read_embeddings_binary(&bytes, path)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::format(path, "neither IQPPEMB1 binary nor UTF-8 JSONL"))?;
        read_embeddings_jsonl(text, path)
    }
}

pub fn read_embeddings_binary(bytes: &[u8], path: &Path) -> Result<EmbeddingStore> {
    let mut r = BinReader::new(bytes, EMBEDDING_MAGIC, path)?;
    let dim = r.u32()? as usize;
    let count = r.u64()?;
    let count = usize::try_from(count).map_err(|_| r.error("count overflows"))?;
    // every id costs at least its 2-byte length prefix
    if count.saturating_mul(2) > r.remaining() {
        return Err(r.error("truncated id table"));
    }
    let ids = (0..count)
        .map(|_| r.short_str())
        .collect::<Result<Vec<_>>>()?;
    let values = count
        .checked_mul(dim)
        .filter(|n| n.saturating_mul(4) <= r.remaining())
        .ok_or_else(|| r.error("truncated vector payload"))?;
    let data = (0..values).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    EmbeddingStore::from_flat(ids, dim, data)
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    id: String,
    v: Vec<f64>,
}

pub fn read_embeddings_jsonl(text: &str, path: &Path) -> Result<EmbeddingStore> {
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        ids.push(row.id);
        rows.push(row.v.into_iter().map(|v| v as f32).collect());
    }
    if rows.is_empty() {
        return Err(Error::format(path, "no embeddings"));
    }
    EmbeddingStore::from_rows(ids, &rows)
}

pub fn write_embeddings_binary(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BinWriter::new(EMBEDDING_MAGIC);
    w.u32(store.dim() as u32);
    w.u64(store.len() as u64);
    for id in store.ids() {
        w.short_str(id)?;
    }
    for &v in store.as_flat() {
        w.f32(v);
    }
    write_file(path.as_ref(), w.buf)
}

/// Values are widened to f64 so the text parses back to identical f32s.
pub fn write_embeddings_jsonl(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (id, row) in store.ids().iter().zip(store.rows()) {
        let line = JsonRow {
            id: id.clone(),
            v: row.iter().map(|&v| v as f64).collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
        out.push('\n');
    }
    write_file(path.as_ref(), out)
}
