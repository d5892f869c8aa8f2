//! Supervised meta-regressor: min-max normalized predictor scores fed to a
//! ν-SVR, trained and evaluated under k-fold cross-validation.

pub mod folds;
pub mod grid;
pub mod normalize;
pub mod svr;

use std::collections::BTreeMap;
use std::path::Path;

pub use folds::{make_folds, DEFAULT_FOLDS};
pub use grid::{train_svr, Grid, GridPoint, TrainParams, TrainedSvr};
pub use normalize::{minmax_normalize, FeatureTable, MinMax};
pub use svr::{fit_svr, Kernel, KernelKind, SvrModel, SvrParams};

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_file, BinReader, BinWriter, Meta};
use crate::model::EffectivenessTable;

const MAGIC: &[u8; 8] = b"IQPPMET1";
const VERSION: u32 = 1;

/// A trained fold model with the normalization it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel {
    pub fold: usize,
    pub columns: Vec<String>,
    pub scaler: MinMax,
    pub selected: GridPoint,
    pub svr: SvrModel,
}

impl MetaModel {
    /// Estimated effectiveness for a raw (unnormalized) feature row.
    pub fn predict(&self, raw: &[f64]) -> Result<f64> {
        self.svr.predict(&self.scaler.apply(raw)?)
    }

    pub fn save(&self, meta: &Meta, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BinWriter::new(MAGIC);
        w.u32(VERSION);
        w.long_str(&meta.to_line());
        w.u64(self.fold as u64);
        w.u64(self.columns.len() as u64);
        for c in &self.columns {
            w.short_str(c)?;
        }
        w.f64s(&self.scaler.min);
        w.f64s(&self.scaler.max);
        w.u32(match self.selected.kernel {
            KernelKind::Linear => 0,
            KernelKind::Rbf => 1,
        });
        w.f64(self.selected.c);
        w.f64(self.selected.nu);
        self.svr.write_body(&mut w);
        write_file(path.as_ref(), w.buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        let mut r = BinReader::new(&bytes, MAGIC, path)?;
        if r.u32()? != VERSION {
            return Err(r.error("unsupported meta model version"));
        }
        r.long_str()?;
        let fold = r.u64()? as usize;
        let n = r.len_prefix(2)?;
        let columns = (0..n).map(|_| r.short_str()).collect::<Result<Vec<_>>>()?;
        let scaler = MinMax {
            min: r.f64s()?,
            max: r.f64s()?,
        };
        let kernel = match r.u32()? {
            0 => KernelKind::Linear,
            1 => KernelKind::Rbf,
            _ => return Err(r.error("unknown kernel")),
        };
        let selected = GridPoint {
            kernel,
            c: r.f64()?,
            nu: r.f64()?,
        };
        let svr = SvrModel::read_body(&mut r)?;
        r.finish()?;
        Ok(Self {
            fold,
            columns,
            scaler,
            selected,
            svr,
        })
    }
}

/// Out-of-fold predictions: every query is scored by the model of the one
/// fold that held it out.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub predictions: BTreeMap<String, f64>,
    pub folds: BTreeMap<String, usize>,
    pub models: Vec<MetaModel>,
}

impl CrossValidation {
    pub fn degenerate_folds(&self) -> Vec<usize> {
        self.models
            .iter()
            .filter(|m| m.svr.degenerate)
            .map(|m| m.fold)
            .collect()
    }
}

/// Trains one model per fold on the other folds and predicts the held-out one.
pub fn cross_validate(
    table: &FeatureTable,
    targets: &EffectivenessTable,
    folds: &BTreeMap<String, usize>,
    params: &TrainParams,
) -> Result<CrossValidation> {
    for q in folds.keys() {
        if table.get(q).is_none() || targets.get(q).is_none() {
            return Err(Error::UnknownQueryId(q.clone()));
        }
    }
    let count = folds.values().max().map_or(0, |m| m + 1);
    let mut predictions = BTreeMap::new();
    let mut models = Vec::with_capacity(count);
    for f in 0..count {
        let (train, test) = folds::split(folds, f);
        if test.is_empty() {
            continue;
        }
        let (normalized, scaler) = minmax_normalize(table, &train)?;
        let x: Vec<Vec<f64>> = train
            .iter()
            .map(|q| normalized.get(q).expect("row present").to_vec())
            .collect();
        let y: Vec<f64> = train
            .iter()
            .map(|q| targets.get(q).expect("target present"))
            .collect();
        let fold_params = TrainParams {
            seed: params.seed.wrapping_add(f as u64 + 1),
            ..params.clone()
        };
        let trained = train_svr(&x, &y, &fold_params)?;
        for q in &test {
            let p = trained.model.predict(normalized.get(q).expect("row present"))?;
            predictions.insert(q.clone(), p);
        }
        models.push(MetaModel {
            fold: f,
            columns: table.columns().to_vec(),
            scaler,
            selected: trained.selected,
            svr: trained.model,
        });
    }
    Ok(CrossValidation {
        predictions,
        folds: folds.clone(),
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Measure;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(n: usize, seed: u64) -> (FeatureTable, EffectivenessTable, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (0..n).map(|i| format!("q{i:03}")).collect();
        let mut rows = BTreeMap::new();
        let mut values = BTreeMap::new();
        for q in &ids {
            let a: f64 = rng.random_range(0.0..10.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            values.insert(q.clone(), (0.05 * a + 0.2 * b + 0.25).clamp(0.0, 1.0));
            rows.insert(q.clone(), vec![a, b]);
        }
        (
            FeatureTable::from_rows(vec!["a".into(), "b".into()], rows).unwrap(),
            EffectivenessTable::new(Measure::AveragePrecision, values).unwrap(),
            ids,
        )
    }

    #[test]
    fn every_query_scored_by_a_model_that_did_not_see_it() {
        let (table, targets, ids) = fixture(40, 1);
        let folds = make_folds(&ids, 5, 1).unwrap();
        let cv = cross_validate(&table, &targets, &folds, &TrainParams::default()).unwrap();
        assert_eq!(cv.predictions.len(), 40);
        assert_eq!(cv.models.len(), 5);
        for m in &cv.models {
            let (train, _) = folds::split(&folds, m.fold);
            assert_eq!(m.scaler, MinMax::fit(&table, &train).unwrap());
        }
    }

    #[test]
    fn perturbing_test_rows_leaves_training_fit_unchanged() {
        let (table, targets, ids) = fixture(30, 2);
        let folds = make_folds(&ids, 5, 2).unwrap();
        let base = cross_validate(&table, &targets, &folds, &TrainParams::default()).unwrap();
        let mut rows = table.rows().clone();
        let (_, test) = folds::split(&folds, 0);
        for q in &test {
            rows.get_mut(q).unwrap()[0] += 1000.0;
        }
        let perturbed = FeatureTable::from_rows(table.columns().to_vec(), rows).unwrap();
        let again = cross_validate(&perturbed, &targets, &folds, &TrainParams::default()).unwrap();
        assert_eq!(base.models[0], again.models[0]);
    }

    #[test]
    fn column_order_does_not_change_predictions() {
        let (table, targets, ids) = fixture(30, 3);
        let swapped = FeatureTable::from_rows(
            vec!["b".into(), "a".into()],
            table.rows().iter().map(|(q, r)| (q.clone(), vec![r[1], r[0]])).collect(),
        )
        .unwrap();
        let folds = make_folds(&ids, 5, 3).unwrap();
        let params = TrainParams {
            grid: Grid {
                c: vec![10.0],
                nu: vec![0.5],
                kernels: vec![KernelKind::Rbf],
            },
            ..TrainParams::default()
        };
        let a = cross_validate(&table, &targets, &folds, &params).unwrap();
        let b = cross_validate(&swapped, &targets, &folds, &params).unwrap();
        // equal up to the solver's stopping tolerance
        for (q, p) in &a.predictions {
            assert!((p - b.predictions[q]).abs() < 1e-3, "{q}: {p} vs {}", b.predictions[q]);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let (table, targets, ids) = fixture(20, 4);
        let folds = make_folds(&ids, 5, 4).unwrap();
        let cv = cross_validate(&table, &targets, &folds, &TrainParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fold0.bin");
        cv.models[0].save(&Meta::new().with("seed", 4), &p).unwrap();
        let back = MetaModel::load(&p).unwrap();
        assert_eq!(back, cv.models[0]);
        let q = folds.iter().find(|(_, &f)| f == 0).unwrap().0;
        assert_eq!(back.predict(table.get(q).unwrap()).unwrap(), cv.predictions[q]);
    }
}
