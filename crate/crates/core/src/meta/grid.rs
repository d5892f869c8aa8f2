use serde::{Deserialize, Serialize};

use super::folds::fold_indices;
use super::svr::{fit_svr, KernelKind, SvrModel, SvrParams};
use crate::error::{Error, Result};
use crate::par;

/// Hyperparameter grid searched by [`train_svr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub c: Vec<f64>,
    pub nu: Vec<f64>,
    pub kernels: Vec<KernelKind>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            c: vec![0.1, 1.0, 10.0, 100.0],
            nu: vec![0.1, 0.25, 0.5, 0.75],
            kernels: vec![KernelKind::Linear, KernelKind::Rbf],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub kernel: KernelKind,
    pub c: f64,
    pub nu: f64,
}

impl Grid {
    /// Kernel-major, then C, then ν.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &kernel in &self.kernels {
            for &c in &self.c {
                for &nu in &self.nu {
                    out.push(GridPoint { kernel, c, nu });
                }
            }
        }
        out
    }

    pub fn contains(&self, p: &GridPoint) -> bool {
        self.points().contains(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub grid: Grid,
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            inner_folds: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSvr {
    pub model: SvrModel,
    pub selected: GridPoint,
    /// Inner-CV mean squared error per grid point, in grid order.
    pub cv_mse: Vec<f64>,
}

fn inner_mse(x: &[Vec<f64>], y: &[f64], fold_of: &[usize], folds: usize, p: &GridPoint) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..folds {
        let (mut tx, mut ty) = (Vec::new(), Vec::new());
        for i in (0..x.len()).filter(|&i| fold_of[i] != f) {
            tx.push(x[i].clone());
            ty.push(y[i]);
        }
        let model = fit_svr(&tx, &ty, &SvrParams::new(p.kernel, p.c, p.nu))?;
        for i in (0..x.len()).filter(|&i| fold_of[i] == f) {
            total += (model.predict(&x[i])? - y[i]).powi(2);
        }
    }
    Ok(total / x.len() as f64)
}

/// Selects a grid point by inner cross-validated MSE (ties go to the earlier
/// point) and refits it on all rows.
pub fn train_svr(x: &[Vec<f64>], y: &[f64], params: &TrainParams) -> Result<TrainedSvr> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "training rows/targets",
            left: x.len(),
            right: y.len(),
        });
    }
    let folds = params.inner_folds.max(2);
    if x.len() < 2 * folds {
        return Err(Error::TooFewQueries {
            n: x.len(),
            folds: 2 * folds,
        });
    }
    if let Some(v) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("target {v} outside [0, 1]")));
    }
    let points = params.grid.points();
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        let p = points[0];
        return Ok(TrainedSvr {
            model: fit_svr(x, y, &SvrParams::new(p.kernel, p.c, p.nu))?,
            selected: p,
            cv_mse: vec![0.0; points.len()],
        });
    }
    let fold_of = fold_indices(x.len(), folds, params.seed);
    let cv_mse = par::map(&points, |p| inner_mse(x, y, &fold_of, folds, p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &m) in cv_mse.iter().enumerate() {
        if m < cv_mse[best] {
            best = i;
        }
    }
    let selected = points[best];
    Ok(TrainedSvr {
        model: fit_svr(x, y, &SvrParams::new(selected.kernel, selected.c, selected.nu))?,
        selected,
        cv_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_grid_holds_reference_configuration() {
        let g = Grid::default();
        assert_eq!(g.points().len(), 32);
        assert!(g.contains(&GridPoint {
            kernel: KernelKind::Rbf,
            c: 100.0,
            nu: 0.25
        }));
    }

    #[test]
    fn selection_stays_in_grid_and_fits_linear_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 * r[0]).collect();
        let t = train_svr(&x, &y, &TrainParams::default()).unwrap();
        assert!(TrainParams::default().grid.contains(&t.selected));
        assert_eq!(t.cv_mse.len(), 32);
        let test: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let mse = test.iter().map(|r| (t.model.predict(r).unwrap() - 0.5 * r[0]).powi(2)).sum::<f64>() / 100.0;
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn constant_targets() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let t = train_svr(&x, &[0.7; 10], &TrainParams::default()).unwrap();
        assert!(t.model.degenerate);
        assert_eq!(t.model.predict(&[0.33]).unwrap(), 0.7);
    }

    #[test]
    fn rejects_small_or_invalid_input() {
        let x = vec![vec![0.0]; 4];
        assert_eq!(train_svr(&x, &[0.1, 0.2, 0.3, 0.4], &TrainParams::default()).unwrap_err().code(), "TOO_FEW_QUERIES");
        let x = vec![vec![0.0]; 6];
        assert_eq!(train_svr(&x, &[0.1, 0.2, 0.3, 0.4, 0.5, 1.5], &TrainParams::default()).unwrap_err().code(), "INVALID_ARGUMENT");
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[0]).collect();
        let p = TrainParams::default();
        assert_eq!(train_svr(&x, &y, &p).unwrap(), train_svr(&x, &y, &p).unwrap());
    }
}
