use crate::error::{Error, Result};
use crate::io::DetectionFile;

/// Number of detected objects divided by their mean box area,
/// `m / ((1/m) * sum(w_i * h_i))`. Higher means harder; no detections
/// scores 0.
pub fn objects_over_area(dets: &DetectionFile, query: &str) -> Result<f64> {
    let boxes = dets
        .get(query)
        .ok_or_else(|| Error::MissingDetections(query.to_string()))?;
    if boxes.is_empty() {
        return Ok(0.0);
    }
    // sum in a canonical order so the score ignores box order
    let mut areas: Vec<f64> = boxes.iter().map(|b| b.w * b.h).collect();
    areas.sort_by(f64::total_cmp);
    let m = areas.len() as f64;
    let mean_area = areas.iter().sum::<f64>() / m;
    Ok(m / mean_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::BoundingBox;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn dets(boxes: &[(f64, f64)]) -> DetectionFile {
        DetectionFile {
            boxes: BTreeMap::from([(
                "q".to_string(),
                boxes.iter().map(|&(w, h)| BoundingBox { w, h }).collect(),
            )]),
        }
    }

    #[test]
    fn examples() {
        assert_eq!(objects_over_area(&dets(&[(10.0, 10.0)]), "q").unwrap(), 0.01);
        assert_eq!(objects_over_area(&dets(&[(2.0, 2.0), (2.0, 2.0)]), "q").unwrap(), 0.5);
        assert_eq!(objects_over_area(&dets(&[]), "q").unwrap(), 0.0);
        assert_eq!(
            objects_over_area(&dets(&[]), "other").unwrap_err().code(),
            "MISSING_DETECTIONS"
        );
    }

    proptest! {
        #[test]
        fn box_order_is_irrelevant(
            mut boxes in proptest::collection::vec((0.1f64..500.0, 0.1f64..500.0), 1..20),
            rot in 0usize..20,
        ) {
            let a = objects_over_area(&dets(&boxes), "q").unwrap();
            let r = rot % boxes.len();
            boxes.rotate_left(r);
            boxes.reverse();
            prop_assert_eq!(a, objects_over_area(&dets(&boxes), "q").unwrap());
        }
    }
}
