//! ν-support vector regression solved with SMO.
//!
//! The dual over the `2l` variables `(α, α*)` is
//!
//! ```text
//! min ½ (α - α*)ᵀ K (α - α*) - yᵀ(α - α*)
//! s.t. Σ(α - α*) = 0,  Σ(α + α*) = C·ν·l,  0 ≤ α, α* ≤ C
//! ```
//!
//! Working pairs are chosen with second-order information, separately
//! among the α and the α* variables, so both equality constraints hold at
//! every step. The regression function is `f(x) = Σ (α_i - α*_i) K(x_i, x) + b`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_file, BinReader, BinWriter, Meta};

const TAU: f64 = 1e-12;
const MAGIC: &[u8; 8] = b"IQPPSVR1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d).exp()
            }
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { .. } => KernelKind::Rbf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub kernel: KernelKind,
    pub c: f64,
    pub nu: f64,
    /// RBF width; `None` uses `1 / (features * variance of all training values)`.
    pub gamma: Option<f64>,
    /// KKT violation tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SvrParams {
    pub fn new(kernel: KernelKind, c: f64, nu: f64) -> Self {
        Self {
            kernel,
            c,
            nu,
            gamma: None,
            tolerance: 1e-3,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub c: f64,
    pub nu: f64,
    pub features: usize,
    pub support: Vec<Vec<f64>>,
    /// `α_i - α*_i` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    /// Set when all targets were equal; the model predicts `bias`.
    pub degenerate: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// `1 / (features * variance)` over every value of the training matrix.
pub fn default_gamma(x: &[Vec<f64>]) -> f64 {
    let features = x.first().map_or(1, Vec::len).max(1);
    let values: Vec<f64> = x.iter().flatten().copied().collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (features as f64 * var)
    } else {
        1.0
    }
}

struct Solution {
    beta: Vec<f64>,
    bias: f64,
    iterations: usize,
    converged: bool,
}

/// SMO for the ν formulation. `sign[t]` is +1 for α variables and -1 for α*.
fn solve_nu(kernel: &[f64], l: usize, y: &[f64], params: &SvrParams) -> Solution {
    let c = params.c;
    let n = 2 * l;
    let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
    let q = |i: usize, j: usize| sign(i) * sign(j) * kernel[(i % l) * l + j % l];
    let row = |i: usize| &kernel[i * l..(i + 1) * l];

    let mut alpha = vec![0.0; n];
    let mut budget = c * params.nu * l as f64 / 2.0;
    for i in 0..l {
        let a = budget.min(c);
        alpha[i] = a;
        alpha[i + l] = a;
        budget -= a;
    }
    let linear: Vec<f64> = (0..n).map(|t| if t < l { -y[t] } else { y[t - l] }).collect();
    let diag: Vec<f64> = (0..n).map(|t| q(t, t)).collect();
    let mut grad = linear.clone();
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (t, g) in grad.iter_mut().enumerate() {
                *g += q(t, j) * a;
            }
        }
    }
    let at_upper = |a: f64| a >= c;
    let at_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        // first index: maximal violator within each sign group
        let (mut gmaxp, mut gmaxp_idx) = (f64::NEG_INFINITY, None);
        let (mut gmaxn, mut gmaxn_idx) = (f64::NEG_INFINITY, None);
        for t in 0..n {
            if sign(t) > 0.0 {
                if !at_upper(alpha[t]) && -grad[t] >= gmaxp {
                    gmaxp = -grad[t];
                    gmaxp_idx = Some(t);
                }
            } else if !at_lower(alpha[t]) && grad[t] >= gmaxn {
                gmaxn = grad[t];
                gmaxn_idx = Some(t);
            }
        }
        // second index: largest guaranteed objective decrease
        let (mut gmaxp2, mut gmaxn2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut best: Option<(usize, f64)> = None;
        let row_p = gmaxp_idx.map(|i| row(i % l));
        let row_n = gmaxn_idx.map(|i| row(i % l));
        for j in 0..n {
            let (jj, positive) = if j < l { (j, true) } else { (j - l, false) };
            let (diff, quad) = if positive {
                if at_lower(alpha[j]) {
                    continue;
                }
                gmaxp2 = gmaxp2.max(grad[j]);
                let (Some(ip), Some(ki)) = (gmaxp_idx, row_p) else { continue };
                (gmaxp + grad[j], diag[ip] + diag[j] - 2.0 * ki[jj])
            } else {
                if at_upper(alpha[j]) {
                    continue;
                }
                gmaxn2 = gmaxn2.max(-grad[j]);
                let (Some(i_n), Some(ki)) = (gmaxn_idx, row_n) else { continue };
                (gmaxn - grad[j], diag[i_n] + diag[j] - 2.0 * ki[jj])
            };
            if diff > 0.0 {
                let obj = -diff * diff / if quad > 0.0 { quad } else { TAU };
                if best.is_none_or(|(_, b)| obj <= b) {
                    best = Some((j, obj));
                }
            }
        }
        let gap = (gmaxp + gmaxp2).max(gmaxn + gmaxn2);
        let Some((j, _)) = best.filter(|_| gap >= params.tolerance) else {
            converged = true;
            break;
        };
        let i = if sign(j) > 0.0 { gmaxp_idx } else { gmaxn_idx }.expect("paired index");
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = diag[i] + diag[j] - 2.0 * q(i, j);
        let quad = if quad > 0.0 { quad } else { TAU };
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
        // q(t, i) = sign(t) * sign(i) * K[t % l][i % l]
        let (ci, cj) = (sign(i) * (alpha[i] - old_i), sign(j) * (alpha[j] - old_j));
        let (ki, kj) = (row(i % l), row(j % l));
        let (gp, gn) = grad.split_at_mut(l);
        for t in 0..l {
            let d = ki[t] * ci + kj[t] * cj;
            gp[t] += d;
            gn[t] -= d;
        }
    }

    // offset from the free variables of each group
    let mut r = [0.0f64; 2];
    for (g, group_sign) in [(0usize, 1.0), (1, -1.0)] {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for t in (0..n).filter(|&t| sign(t) == group_sign) {
            if at_upper(alpha[t]) {
                lb = lb.max(grad[t]);
            } else if at_lower(alpha[t]) {
                ub = ub.min(grad[t]);
            } else {
                free += 1;
                sum_free += grad[t];
            }
        }
        r[g] = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    }
    let rho = (r[0] - r[1]) / 2.0;
    Solution {
        beta: (0..l).map(|i| alpha[i] - alpha[i + l]).collect(),
        bias: -rho,
        iterations,
        converged,
    }
}

/// Fits one ν-SVR with fixed hyperparameters.
pub fn fit_svr(x: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "training rows/targets",
            left: x.len(),
            right: y.len(),
        });
    }
    let l = x.len();
    if l == 0 {
        return Err(Error::InvalidArgument("SVR needs at least one training row".into()));
    }
    let features = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != features) {
        return Err(Error::NormalizationMismatch {
            expected: features,
            got: row.len(),
        });
    }
    if params.c.is_nan() || params.c <= 0.0 || !(params.nu > 0.0 && params.nu <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need C > 0 and 0 < nu <= 1, got C={} nu={}",
            params.c, params.nu
        )));
    }
    let kernel = match params.kernel {
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Rbf => Kernel::Rbf {
            gamma: params.gamma.unwrap_or_else(|| default_gamma(x)),
        },
    };
    if y.iter().all(|&v| v == y[0]) {
        return Ok(SvrModel {
            kernel,
            c: params.c,
            nu: params.nu,
            features,
            support: Vec::new(),
            coefficients: Vec::new(),
            bias: y[0],
            degenerate: true,
            iterations: 0,
            converged: true,
        });
    }
    let mut gram = vec![0.0; l * l];
    for i in 0..l {
        for j in i..l {
            let k = kernel.eval(&x[i], &x[j]);
            gram[i * l + j] = k;
            gram[j * l + i] = k;
        }
    }
    let sol = solve_nu(&gram, l, y, params);
    let (support, coefficients) = x
        .iter()
        .zip(&sol.beta)
        .filter(|(_, &b)| b != 0.0)
        .map(|(row, &b)| (row.clone(), b))
        .unzip();
    Ok(SvrModel {
        kernel,
        c: params.c,
        nu: params.nu,
        features,
        support,
        coefficients,
        bias: sol.bias,
        degenerate: false,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

impl SvrModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.features {
            return Err(Error::NormalizationMismatch {
                expected: self.features,
                got: row.len(),
            });
        }
        Ok(self.bias
            + self
                .support
                .iter()
                .zip(&self.coefficients)
                .map(|(sv, &b)| b * self.kernel.eval(sv, row))
                .sum::<f64>())
    }

    pub fn save(&self, meta: &Meta, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BinWriter::new(MAGIC);
        w.u32(VERSION);
        w.long_str(&meta.to_line());
        self.write_body(&mut w);
        write_file(path.as_ref(), w.buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        let mut r = BinReader::new(&bytes, MAGIC, path)?;
        if r.u32()? != VERSION {
            return Err(r.error("unsupported SVR model version"));
        }
        r.long_str()?;
        let model = Self::read_body(&mut r)?;
        r.finish()?;
        Ok(model)
    }

    pub(crate) fn write_body(&self, w: &mut BinWriter) {
        match self.kernel {
            Kernel::Linear => {
                w.u32(0);
                w.f64(0.0);
            }
            Kernel::Rbf { gamma } => {
                w.u32(1);
                w.f64(gamma);
            }
        }
        w.f64(self.c);
        w.f64(self.nu);
        w.u64(self.features as u64);
        w.f64(self.bias);
        w.u32(self.degenerate as u32);
        w.u64(self.iterations as u64);
        w.u32(self.converged as u32);
        w.f64s(&self.coefficients);
        for sv in &self.support {
            for &v in sv {
                w.f64(v);
            }
        }
    }

    pub(crate) fn read_body(r: &mut BinReader) -> Result<Self> {
        let kind = r.u32()?;
        let gamma = r.f64()?;
        let kernel = match kind {
            0 => Kernel::Linear,
            1 => Kernel::Rbf { gamma },
            _ => return Err(r.error("unknown kernel")),
        };
        let c = r.f64()?;
        let nu = r.f64()?;
        let features = r.u64()? as usize;
        let bias = r.f64()?;
        let degenerate = r.u32()? != 0;
        let iterations = r.u64()? as usize;
        let converged = r.u32()? != 0;
        let coefficients = r.f64s()?;
        let support = (0..coefficients.len())
            .map(|_| (0..features).map(|_| r.f64()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernel,
            c,
            nu,
            features,
            support,
            coefficients,
            bias,
            degenerate,
            iterations,
            converged,
        })
    }
}
