use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::PredictorOutput;

/// Predictor scores laid out as one row per query, one column per predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    columns: Vec<String>,
    rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    /// Every predictor must cover every query.
    pub fn from_predictors(predictors: &[&PredictorOutput], queries: &[String]) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for q in queries {
            let row = predictors
                .iter()
                .map(|p| {
                    p.get(q).ok_or_else(|| Error::MissingScores {
                        predictor: p.name.clone(),
                        query: q.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.insert(q.clone(), row);
        }
        Ok(Self {
            columns: predictors.iter().map(|p| p.name.clone()).collect(),
            rows,
        })
    }

    pub fn from_rows(columns: Vec<String>, rows: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if let Some(r) = rows.values().find(|r| r.len() != columns.len()) {
            return Err(Error::NormalizationMismatch {
                expected: columns.len(),
                got: r.len(),
            });
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.rows
    }

    pub fn get(&self, query: &str) -> Option<&[f64]> {
        self.rows.get(query).map(Vec::as_slice)
    }

    fn row(&self, query: &str) -> Result<&[f64]> {
        self.get(query)
            .ok_or_else(|| Error::UnknownQueryId(query.to_string()))
    }
}

/// Per-column min-max scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(table: &FeatureTable, train: &[String]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("normalization needs training rows".into()));
        }
        let width = table.columns.len();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for q in train {
            for (j, &v) in table.row(q)?.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    /// Maps into [0, 1], clipping values outside the training range.
    /// A constant training column maps to 0.5.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.min.len() {
            return Err(Error::NormalizationMismatch {
                expected: self.min.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect())
    }
}

/// Normalizes every row of `table` with min/max taken from `train` only.
pub fn minmax_normalize(table: &FeatureTable, train: &[String]) -> Result<(FeatureTable, MinMax)> {
    let scaler = MinMax::fit(table, train)?;
    let rows = table
        .rows
        .iter()
        .map(|(q, r)| Ok((q.clone(), scaler.apply(r)?)))
        .collect::<Result<_>>()?;
    Ok((
        FeatureTable {
            columns: table.columns.clone(),
            rows,
        },
        scaler,
    ))
}
