//! Similarity matrices for external list-level predictors.
//!
//! Layout: magic `IQPPSIM1`, u32-length-prefixed provenance line, u64 matrix
//! count, then per matrix a u16-length-prefixed query id, u32 size `n` and
//! `n * n` row-major f64 values, all little-endian.

use std::path::Path;

use super::{read_bytes, write_file, BinReader, BinWriter, Meta};
use crate::error::Result;
use crate::retrieval::SimilarityMatrix;

pub const MATRIX_MAGIC: &[u8; 8] = b"IQPPSIM1";

pub fn write_similarity_matrices(
    matrices: &[SimilarityMatrix],
    meta: &Meta,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BinWriter::new(MATRIX_MAGIC);
    w.long_str(&meta.to_line());
    w.u64(matrices.len() as u64);
    for m in matrices {
        w.short_str(&m.query_id)?;
        w.u32(m.size as u32);
        for &v in &m.values {
            w.f64(v);
        }
    }
    write_file(path.as_ref(), w.buf)
}

pub fn load_similarity_matrices(path: impl AsRef<Path>) -> Result<(Meta, Vec<SimilarityMatrix>)> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut r = BinReader::new(&bytes, MATRIX_MAGIC, path)?;
    let meta = Meta::from_line(&r.long_str()?);
    let count = r.len_prefix(6)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let query_id = r.short_str()?;
        let size = r.u32()? as usize;
        let cells = size
            .checked_mul(size)
            .filter(|c| c.saturating_mul(8) <= r.remaining())
            .ok_or_else(|| r.error("truncated matrix"))?;
        let values = (0..cells).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        out.push(SimilarityMatrix {
            query_id,
            size,
            values,
        });
    }
    r.finish()?;
    Ok((meta, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let m = vec![
            SimilarityMatrix { query_id: "q1".into(), size: 2, values: vec![1.0, 0.5, 0.5, 1.0] },
            SimilarityMatrix { query_id: "q2".into(), size: 1, values: vec![1.0] },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let meta = Meta::new().with("config_hash", "ff").with("seed", 9);
        write_similarity_matrices(&m, &meta, &p).unwrap();
        let (meta2, back) = load_similarity_matrices(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta2, meta);

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert_eq!(load_similarity_matrices(&p).unwrap_err().code(), "FORMAT_ERROR");
    }
}
