use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    /// `None` when |r| = 1.
    pub t: Option<f64>,
    pub critical: f64,
    pub significant: bool,
    /// |r| = 1: significant by convention.
    pub degenerate: bool,
}

/// Two-sided critical value of Student's t with `df` degrees of freedom.
pub fn critical_value(alpha: f64, df: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidArgument(format!("t distribution with df {df}: {e}")))?;
    Ok(dist.inverse_cdf(1.0 - alpha / 2.0))
}

/// `t = r·sqrt((n-2)/(1-r²))` compared two-sided against the critical value
/// at `alpha` with `n - 2` degrees of freedom.
pub fn significance(r: f64, n: usize, alpha: f64) -> Result<Significance> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("significance needs n >= 3, got {n}")));
    }
    if !r.is_finite() || r.abs() > 1.0 {
        return Err(Error::InvalidArgument(format!("correlation {r} outside [-1, 1]")));
    }
    let critical = critical_value(alpha, (n - 2) as f64)?;
    if r.abs() == 1.0 {
        return Ok(Significance {
            t: None,
            critical,
            significant: true,
            degenerate: true,
        });
    }
    let t = r * ((n - 2) as f64 / (1.0 - r * r)).sqrt();
    Ok(Significance {
        t: Some(t),
        critical,
        significant: t.abs() > critical,
        degenerate: false,
    })
}
