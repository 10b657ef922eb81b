//! Predictive metrics and the Gaussian 2-Wasserstein distance.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::ensemble::MixturePrediction;
use crate::error::{check_dim, Error, Result};
use crate::info_filter::Prediction;

/// Anything that can score an observation by log-density.
pub trait PredictiveDensity {
    fn mean(&self) -> f64;
    fn log_density(&self, y: f64) -> f64;
}

impl PredictiveDensity for Prediction {
    fn mean(&self) -> f64 {
        self.mean
    }

    fn log_density(&self, y: f64) -> f64 {
        Prediction::log_density(self, y)
    }
}

impl PredictiveDensity for MixturePrediction {
    fn mean(&self) -> f64 {
        self.mean
    }

    fn log_density(&self, y: f64) -> f64 {
        MixturePrediction::log_density(self, y)
    }
}

pub fn rmse(means: &[f64], truths: &[f64]) -> Result<f64> {
    check_dim("rmse inputs", means.len(), truths.len())?;
    if means.is_empty() {
        return Err(Error::invalid("rmse of an empty set"));
    }
    let sse: f64 = means.iter().zip(truths).map(|(m, t)| (m - t).powi(2)).sum();
    Ok((sse / means.len() as f64).sqrt())
}

/// Mean negative log predictive density.
pub fn npll<P: PredictiveDensity>(preds: &[P], truths: &[f64]) -> Result<f64> {
    check_dim("npll inputs", preds.len(), truths.len())?;
    if preds.is_empty() {
        return Err(Error::invalid("npll of an empty set"));
    }
    let total: f64 = preds
        .iter()
        .zip(truths)
        .map(|(p, &y)| -p.log_density(y))
        .sum();
    Ok(total / preds.len() as f64)
}

/// Symmetric eigendecomposition with small negative eigenvalues clipped.
fn clipped_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let mut eig = SymmetricEigen::new(m.clone());
    let scale = m.trace().abs().max(f64::MIN_POSITIVE);
    for v in eig.eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-10 * scale {
                return Err(Error::invalid(format!(
                    "{what} is indefinite (eigenvalue {v:e})"
                )));
            }
            *v = 0.0;
        }
    }
    Ok(eig)
}

/// `W2(N(mu1, S1), N(mu2, S2))` in closed form:
/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2)`, square-rooted.
pub fn wasserstein2_gaussians(
    mu1: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    sigma2: &DMatrix<f64>,
) -> Result<f64> {
    let n = mu1.len();
    check_dim("w2 mean", n, mu2.len())?;
    check_dim("w2 covariance 1", n, sigma1.nrows())?;
    check_dim("w2 covariance 2", n, sigma2.nrows())?;
    clipped_eigen(sigma1, "first covariance")?;
    let e2 = clipped_eigen(sigma2, "second covariance")?;
    let root2 = &e2.eigenvectors
        * DMatrix::from_diagonal(&e2.eigenvalues.map(f64::sqrt))
        * e2.eigenvectors.transpose();
    let mut cross = &root2 * sigma1 * &root2;
    crate::info_filter::symmetrize(&mut cross);
    let cross_root_trace: f64 = clipped_eigen(&cross, "cross term")?
        .eigenvalues
        .iter()
        .map(|v| v.sqrt())
        .sum();
    let bures = (sigma1.trace() + sigma2.trace() - 2.0 * cross_root_trace).max(0.0);
    Ok(((mu1 - mu2).norm_squared() + bures).sqrt())
}

/// Who a metrics row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentLabel {
    Agent(usize),
    /// Each test point scored by the agent owning its block.
    Stitched,
}

impl fmt::Display for AgentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentLabel::Agent(k) => write!(f, "{k}"),
            AgentLabel::Stitched => f.write_str("stitched"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub t: i64,
    pub agent: AgentLabel,
    pub rmse: f64,
    pub npll: f64,
    pub w2_to_centralized: Option<f64>,
}

pub const METRICS_HEADER: &str = "t,agent,rmse,npll,w2";

/// Writes `t,agent,rmse,npll,w2` rows; floats use shortest round-trip form.
pub fn write_metrics_csv<W: Write>(w: &mut W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        let w2 = r
            .w2_to_centralized
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", r.t, r.agent, r.rmse, r.npll, w2)?;
    }
    Ok(())
}
