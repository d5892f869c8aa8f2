//! Per-query predictor scores.
//!
//! ```text
//! # orientation=HIGHER_IS_HARDER
//! # predictor=ae_masked
//! q1<TAB>0.25
//! ```
//! `predictor` is optional and falls back to the file stem.

use std::collections::BTreeMap;
use std::path::Path;

use super::{fmt_f64, parse_f64, read_to_string, split_header, write_file, Meta};
use crate::error::{Error, Result};
use crate::model::{Orientation, PredictorOutput};

pub fn load_scores(path: impl AsRef<Path>) -> Result<PredictorOutput> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_scores(&text, &fallback, path)
}

pub fn parse_scores(text: &str, fallback_name: &str, path: &Path) -> Result<PredictorOutput> {
    let (meta, rows) = split_header(text);
    let orientation: Orientation = meta
        .get("orientation")
        .ok_or_else(|| Error::format(path, "missing `# orientation=` header"))?
        .parse()
        .map_err(|e: String| Error::format(path, e))?;
    let name = meta.get("predictor").unwrap_or(fallback_name).to_string();
    let mut scores = BTreeMap::new();
    for (line, row) in rows {
        let (query, value) = row
            .split_once('\t')
            .ok_or_else(|| Error::format(path, format!("line {line}: expected `query\\tscore`")))?;
        let value = parse_f64(path, line, value)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                id: query.to_string(),
                column: 1,
            });
        }
        if scores.insert(query.trim().to_string(), value).is_some() {
            return Err(Error::format(path, format!("line {line}: duplicate query `{query}`")));
        }
    }
    PredictorOutput::new(name, orientation, scores)
}

pub fn write_scores(output: &PredictorOutput, meta: &Meta, path: impl AsRef<Path>) -> Result<()> {
    let meta = meta
        .clone()
        .with("orientation", output.orientation)
        .with("predictor", &output.name);
    let mut out = String::new();
    meta.write_header(&mut out);
    for (q, v) in output.scores() {
        out.push_str(&format!("{q}\t{}\n", fmt_f64(*v)));
    }
    write_file(path.as_ref(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_header_and_rows() {
        let p = parse_scores("# orientation=HIGHER_IS_HARDER\nq1\t0.25\n", "ae", Path::new("ae.tsv"))
            .unwrap();
        assert_eq!(p.name, "ae");
        assert_eq!(p.orientation, Orientation::HigherIsHarder);
        assert_eq!(p.get("q1"), Some(0.25));
    }

    #[test]
    fn rejects_bad_files() {
        let x = Path::new("x");
        assert_eq!(parse_scores("q1\t0.2\n", "x", x).unwrap_err().code(), "FORMAT_ERROR");
        let dup = "# orientation=HIGHER_IS_BETTER\nq1\t0.2\nq1\t0.3\n";
        assert_eq!(parse_scores(dup, "x", x).unwrap_err().code(), "FORMAT_ERROR");
        let nan = "# orientation=HIGHER_IS_BETTER\nq1\tNaN\n";
        assert_eq!(parse_scores(nan, "x", x).unwrap_err().code(), "NON_FINITE_VALUE");
    }

    proptest! {
        #[test]
        fn round_trip(values in proptest::collection::btree_map("[a-z][a-z0-9_]{0,8}", -1e9f64..1e9, 1..30)) {
            let out = PredictorOutput::new("p", Orientation::HigherIsBetter, values).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.tsv");
            write_scores(&out, &Meta::new().with("config_hash", "abc"), &path).unwrap();
            prop_assert_eq!(load_scores(&path).unwrap(), out);
        }
    }
}
