//! Robust M-estimation weights for the information filter.
//!
//! Each observation gets a weight in `[0, 1]` from its standardized
//! residual against the pre-update predictive distribution. The weights
//! enter the increment as a diagonal matrix `W`:
//!
//! ```text
//! P = Phi W Phi^T / obs_var,    s = Phi W y / obs_var
//! ```
//!
//! which is inference under a tempered likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::FeatureMap;
use crate::info_filter::{build_increment, Increment, InfoState, Prediction};

pub const DEFAULT_HUBER_DELTA: f64 = 1.345;
pub const DEFAULT_HAMPEL: (f64, f64, f64) = (2.0, 4.0, 8.0);

/// Weight function applied to standardized residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RobustConfig {
    /// Every observation has weight 1.
    #[default]
    None,
    Huber {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    Hampel {
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_b")]
        b: f64,
        #[serde(default = "default_c")]
        c: f64,
    },
}

fn default_delta() -> f64 {
    DEFAULT_HUBER_DELTA
}
fn default_a() -> f64 {
    DEFAULT_HAMPEL.0
}
fn default_b() -> f64 {
    DEFAULT_HAMPEL.1
}
fn default_c() -> f64 {
    DEFAULT_HAMPEL.2
}

impl RobustConfig {
    pub fn huber() -> Self {
        RobustConfig::Huber {
            delta: DEFAULT_HUBER_DELTA,
        }
    }

    pub fn hampel() -> Self {
        let (a, b, c) = DEFAULT_HAMPEL;
        RobustConfig::Hampel { a, b, c }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RobustConfig::None => Ok(()),
            RobustConfig::Huber { delta } => check_delta(delta),
            RobustConfig::Hampel { a, b, c } => check_hampel(a, b, c),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, RobustConfig::None)
    }

    pub fn weight(&self, e: f64) -> Result<f64> {
        match *self {
            RobustConfig::None => Ok(1.0),
            RobustConfig::Huber { delta } => huber_weight(e, delta),
            RobustConfig::Hampel { a, b, c } => hampel_weight(e, a, b, c),
        }
    }

    pub fn weights(&self, residuals: &[f64]) -> Result<Vec<f64>> {
        residuals.iter().map(|&e| self.weight(e)).collect()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "Huber threshold must be positive, got {delta}"
        )))
    }
}

fn check_hampel(a: f64, b: f64, c: f64) -> Result<()> {
    if 0.0 < a && a < b && b < c {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "Hampel breakpoints must satisfy 0 < a < b < c, got ({a}, {b}, {c})"
        )))
    }
}

/// 1 inside `[-delta, delta]`, `delta / |e|` outside.
pub fn huber_weight(e: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let r = e.abs();
    Ok(if r <= delta { 1.0 } else { delta / r })
}

/// Redescending Hampel weight, continuous at every breakpoint.
///
/// `1` on `[0, a]`, `a/|e|` on `(a, b]`, `a (c - |e|) / (|e| (c - b))` on
/// `(b, c]`, and `0` beyond `c`.
pub fn hampel_weight(e: f64, a: f64, b: f64, c: f64) -> Result<f64> {
    check_hampel(a, b, c)?;
    let r = e.abs();
    Ok(if r <= a {
        1.0
    } else if r <= b {
        a / r
    } else if r <= c {
        a * (c - r) / (r * (c - b))
    } else {
        0.0
    })
}

/// `(y_i - mean_i) / sd_i` from predictions made before the batch is applied.
pub fn standardized_residuals(
    state: &InfoState,
    fm: &FeatureMap,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("residual targets", x.nrows(), y.len())?;
    let preds = state.predict_batch(fm, x)?;
    Ok(residuals_from_predictions(&preds, y.as_slice()))
}

pub fn residuals_from_predictions(preds: &[Prediction], y: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        y.len(),
        preds.iter().zip(y).map(|(p, yi)| (yi - p.mean) / p.sd()),
    )
}

/// Increment with per-observation weights in `[0, 1]`.
pub fn robust_increment(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
    obs_variance: f64,
) -> Result<Increment> {
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::invalid(format!("robust weight {w} outside [0, 1]")));
    }
    build_increment(phi, y, Some(weights), obs_variance)
}
