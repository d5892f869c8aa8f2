use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::correlation::{kendall_tau, pearson};
use super::significance::significance;
use crate::error::{Error, Result};
use crate::model::{EffectivenessTable, Measure, Orientation, PredictorOutput};

/// Out-of-fold scores of a supervised predictor trained against `measure`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedOutput {
    pub output: PredictorOutput,
    pub measure: Measure,
    pub folds: BTreeMap<String, usize>,
}

/// Everything evaluated for one retrieval system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemBlock {
    pub system: String,
    pub tables: Vec<EffectivenessTable>,
    pub predictors: Vec<PredictorOutput>,
    pub supervised: Vec<SupervisedOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldCorrelation {
    pub fold: usize,
    pub n: usize,
    pub pearson: Option<f64>,
    pub kendall: Option<f64>,
}

/// One predictor against one measure on one system. Correlations are signed
/// and `None` when undefined (a constant input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub predictor: String,
    pub orientation: Orientation,
    pub system: String,
    pub measure: Measure,
    pub n: usize,
    pub pearson: Option<f64>,
    pub kendall: Option<f64>,
    pub t: Option<f64>,
    pub significant: bool,
    pub t_kendall: Option<f64>,
    pub significant_kendall: bool,
    /// A coefficient of exactly ±1, significant by convention.
    pub degenerate: bool,
    /// Supervised predictors: correlation of all out-of-fold predictions at once.
    pub pooled_pearson: Option<f64>,
    pub pooled_kendall: Option<f64>,
    pub folds: Option<Vec<FoldCorrelation>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: BTreeMap<String, String>,
    pub alpha: f64,
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub fn row(&self, predictor: &str, system: &str, measure: Measure) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.predictor == predictor && r.system == system && r.measure == measure)
    }
}

/// Ground truth against predicted value for one query, for scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub system: String,
    pub measure: Measure,
    pub query_id: String,
    pub ground_truth: f64,
    pub predicted: f64,
}

fn paired(table: &EffectivenessTable, p: &PredictorOutput) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let mut ids = Vec::with_capacity(table.values().len());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (q, &y) in table.values() {
        let x = p.get(q).ok_or_else(|| Error::MissingScores {
            predictor: p.name.clone(),
            query: q.clone(),
        })?;
        ids.push(q.clone());
        xs.push(x);
        ys.push(y);
    }
    Ok((ids, xs, ys))
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn row(
    p: &PredictorOutput,
    system: &str,
    table: &EffectivenessTable,
    folds: Option<&BTreeMap<String, usize>>,
    alpha: f64,
) -> Result<ReportRow> {
    let (ids, xs, ys) = paired(table, p)?;
    let n = xs.len();
    let pooled_p = pearson(&xs, &ys)?;
    let pooled_k = kendall_tau(&xs, &ys)?;
    let (r, tau, per_fold, pooled_pearson, pooled_kendall) = match folds {
        None => (pooled_p, pooled_k, None, None, None),
        Some(folds) => {
            let count = folds.values().max().map_or(0, |m| m + 1);
            let mut per = Vec::with_capacity(count);
            for f in 0..count {
                let (mut fx, mut fy) = (Vec::new(), Vec::new());
                for (i, q) in ids.iter().enumerate() {
                    if folds.get(q) == Some(&f) {
                        fx.push(xs[i]);
                        fy.push(ys[i]);
                    }
                }
                let (fp, fk) = if fx.len() >= 3 {
                    (pearson(&fx, &fy)?, kendall_tau(&fx, &fy)?)
                } else {
                    (None, None)
                };
                per.push(FoldCorrelation {
                    fold: f,
                    n: fx.len(),
                    pearson: fp,
                    kendall: fk,
                });
            }
            let r = mean_defined(per.iter().map(|c| c.pearson));
            let tau = mean_defined(per.iter().map(|c| c.kendall));
            (r, tau, Some(per), pooled_p, pooled_k)
        }
    };
    let sig_p = r.map(|r| significance(r, n, alpha)).transpose()?;
    let sig_k = tau.map(|t| significance(t, n, alpha)).transpose()?;
    Ok(ReportRow {
        predictor: p.name.clone(),
        orientation: p.orientation,
        system: system.to_string(),
        measure: table.measure,
        n,
        pearson: r,
        kendall: tau,
        t: sig_p.and_then(|s| s.t),
        significant: sig_p.is_some_and(|s| s.significant),
        t_kendall: sig_k.and_then(|s| s.t),
        significant_kendall: sig_k.is_some_and(|s| s.significant),
        degenerate: sig_p.is_some_and(|s| s.degenerate) || sig_k.is_some_and(|s| s.degenerate),
        pooled_pearson,
        pooled_kendall,
        folds: per_fold,
    })
}

/// One row per system × measure × predictor, in input order. Supervised
/// predictors are only evaluated against the measure they were trained on.
pub fn build_report(
    blocks: &[SystemBlock],
    alpha: f64,
    meta: BTreeMap<String, String>,
) -> Result<EvaluationReport> {
    let mut rows = Vec::new();
    for b in blocks {
        for table in &b.tables {
            for p in &b.predictors {
                rows.push(row(p, &b.system, table, None, alpha)?);
            }
            for s in b.supervised.iter().filter(|s| s.measure == table.measure) {
                rows.push(row(&s.output, &b.system, table, Some(&s.folds), alpha)?);
            }
        }
    }
    Ok(EvaluationReport { meta, alpha, rows })
}

/// Scatter data per predictor name, in the same order as the report rows.
pub fn plot_data(blocks: &[SystemBlock]) -> Result<BTreeMap<String, Vec<PlotPoint>>> {
    let mut out: BTreeMap<String, Vec<PlotPoint>> = BTreeMap::new();
    for b in blocks {
        for table in &b.tables {
            let supervised = b
                .supervised
                .iter()
                .filter(|s| s.measure == table.measure)
                .map(|s| &s.output);
            for p in b.predictors.iter().chain(supervised) {
                let (ids, xs, ys) = paired(table, p)?;
                let series = out.entry(p.name.clone()).or_default();
                for ((q, x), y) in ids.into_iter().zip(xs).zip(ys) {
                    series.push(PlotPoint {
                        system: b.system.clone(),
                        measure: table.measure,
                        query_id: q,
                        ground_truth: y,
                        predicted: x,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ap_table(values: &[f64]) -> EffectivenessTable {
        EffectivenessTable::new(
            Measure::AveragePrecision,
            values.iter().enumerate().map(|(i, v)| (format!("q{i:03}"), *v)).collect(),
        )
        .unwrap()
    }

    fn output(name: &str, values: &[f64]) -> PredictorOutput {
        PredictorOutput::new(
            name,
            Orientation::HigherIsBetter,
            values.iter().enumerate().map(|(i, v)| (format!("q{i:03}"), *v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn predictor_equal_to_ground_truth() {
        let ap = [0.1, 0.5, 0.3, 0.9, 0.2];
        let block = SystemBlock {
            system: "s".into(),
            tables: vec![ap_table(&ap)],
            predictors: vec![output("oracle", &ap)],
            supervised: vec![],
        };
        let rep = build_report(&[block], 0.01, BTreeMap::new()).unwrap();
        let r = &rep.rows[0];
        assert_eq!((r.pearson, r.kendall), (Some(1.0), Some(1.0)));
        assert!(r.significant && r.degenerate);
    }

    #[test]
    fn missing_scores() {
        let block = SystemBlock {
            system: "s".into(),
            tables: vec![ap_table(&[0.1, 0.2, 0.3, 0.4])],
            predictors: vec![output("p", &[1.0, 2.0, 3.0])],
            supervised: vec![],
        };
        assert_eq!(build_report(&[block], 0.01, BTreeMap::new()).unwrap_err().code(), "MISSING_SCORES");
    }

    #[test]
    fn random_predictor_is_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ap: Vec<f64> = (0..700).map(|_| rng.random_range(0.0..1.0)).collect();
        let noise: Vec<f64> = (0..700).map(|_| rng.random_range(0.0..1.0)).collect();
        let block = SystemBlock {
            system: "s".into(),
            tables: vec![ap_table(&ap)],
            predictors: vec![output("noise", &noise)],
            supervised: vec![],
        };
        let rep = build_report(&[block], 0.01, BTreeMap::new()).unwrap();
        assert!(rep.rows[0].pearson.unwrap().abs() < 0.1);
    }

    #[test]
    fn supervised_rows_average_folds() {
        let ap = [0.1, 0.5, 0.3, 0.9, 0.2, 0.6, 0.4, 0.8];
        let pred = [0.2, 0.4, 0.1, 0.7, 0.3, 0.9, 0.5, 0.6];
        let folds: BTreeMap<String, usize> = (0..8).map(|i| (format!("q{i:03}"), i % 2)).collect();
        let block = SystemBlock {
            system: "s".into(),
            tables: vec![ap_table(&ap)],
            predictors: vec![],
            supervised: vec![SupervisedOutput {
                output: output("meta", &pred),
                measure: Measure::AveragePrecision,
                folds,
            }],
        };
        let rep = build_report(&[block], 0.01, BTreeMap::new()).unwrap();
        let r = &rep.rows[0];
        let even: Vec<usize> = vec![0, 2, 4, 6];
        let odd: Vec<usize> = vec![1, 3, 5, 7];
        let corr = |idx: &[usize]| {
            let x: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
            let y: Vec<f64> = idx.iter().map(|&i| ap[i]).collect();
            pearson(&x, &y).unwrap().unwrap()
        };
        let expected = (corr(&even) + corr(&odd)) / 2.0;
        assert!((r.pearson.unwrap() - expected).abs() < 1e-15);
        assert_eq!(r.folds.as_ref().unwrap().len(), 2);
        assert_eq!(r.pooled_pearson, pearson(&pred, &ap).unwrap());
    }

    #[test]
    fn constant_predictor_is_undefined() {
        let block = SystemBlock {
            system: "s".into(),
            tables: vec![ap_table(&[0.1, 0.2, 0.3, 0.4])],
            predictors: vec![output("flat", &[1.0; 4])],
            supervised: vec![],
        };
        let r = &build_report(&[block], 0.01, BTreeMap::new()).unwrap().rows[0];
        assert_eq!((r.pearson, r.t, r.significant), (None, None, false));
    }
}
