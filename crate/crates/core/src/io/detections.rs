//! Object detections per query image, JSONL:
//! `{"id":"q1","boxes":[{"w":10,"h":20}]}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, write_file};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionFile {
    pub boxes: BTreeMap<String, Vec<BoundingBox>>,
}

impl DetectionFile {
    pub fn get(&self, query: &str) -> Option<&[BoundingBox]> {
        self.boxes.get(query).map(Vec::as_slice)
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    id: String,
    boxes: Vec<BoundingBox>,
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionFile> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut boxes = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        if let Some(b) = row
            .boxes
            .iter()
            .find(|b| !(b.w.is_finite() && b.h.is_finite() && b.w > 0.0 && b.h > 0.0))
        {
            return Err(Error::format(
                path,
                format!("line {}: box {}x{} must be positive and finite", i + 1, b.w, b.h),
            ));
        }
        if boxes.insert(row.id.clone(), row.boxes).is_some() {
            return Err(Error::format(path, format!("line {}: duplicate id `{}`", i + 1, row.id)));
        }
    }
    Ok(DetectionFile { boxes })
}

pub fn write_detections(file: &DetectionFile, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (id, boxes) in &file.boxes {
        let row = Row {
            id: id.clone(),
            boxes: boxes.clone(),
        };
        out.push_str(&serde_json::to_string(&row).expect("plain struct serializes"));
        out.push('\n');
    }
    write_file(path.as_ref(), out)
}
