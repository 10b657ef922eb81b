//! Ensembles of RF-GP models with prequential mixture weights.
//!
//! Each agent keeps `M` models with different kernel hyperparameters.
//! Member `m` draws its frequencies from random stream `m` of the shared
//! base seed, so every agent sees the same basis for the same member and
//! increments stay summable across the network.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::{sample_frequencies_for_member, FeatureMap, KernelSpec};
use crate::info_filter::{prior_state, InfoState, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub members: Vec<KernelSpec>,
    /// Random frequencies per member (`J`).
    pub num_features: usize,
    pub base_seed: u64,
}

impl EnsembleSpec {
    /// Cartesian product of isotropic spatial lengthscales and prior variances.
    pub fn grid(
        dim: usize,
        lengthscales: &[f64],
        prior_variances: &[f64],
        temporal_lengthscale: Option<f64>,
        obs_variance: f64,
        num_features: usize,
        base_seed: u64,
    ) -> Result<Self> {
        let mut members = Vec::with_capacity(lengthscales.len() * prior_variances.len());
        for &l in lengthscales {
            for &pv in prior_variances {
                members.push(KernelSpec::new(
                    vec![l; dim],
                    temporal_lengthscale,
                    pv,
                    obs_variance,
                )?);
            }
        }
        let spec = EnsembleSpec {
            members,
            num_features,
            base_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one member"));
        }
        if self.num_features == 0 {
            return Err(Error::invalid("number of features must be at least 1"));
        }
        let d = self.members[0].spatial_dim();
        for m in &self.members {
            m.validate()?;
            if m.spatial_dim() != d {
                return Err(Error::invalid(
                    "ensemble members disagree on input dimension",
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn spatial_dim(&self) -> usize {
        self.members[0].spatial_dim()
    }

    /// Shared bases for all members; identical on every agent.
    pub fn feature_maps(&self) -> Result<Vec<FeatureMap>> {
        self.members
            .iter()
            .enumerate()
            .map(|(m, spec)| {
                sample_frequencies_for_member(
                    spec,
                    self.num_features,
                    spec.spatial_dim(),
                    self.base_seed,
                    m as u64,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub models: Vec<InfoState>,
    /// Accumulated one-step-ahead predictive log-density per member.
    pub log_evidence: Vec<f64>,
}

/// Prior states for every member plus their shared feature maps.
pub fn init_ensemble(spec: &EnsembleSpec) -> Result<(EnsembleState, Vec<FeatureMap>)> {
    spec.validate()?;
    let models = spec
        .members
        .iter()
        .map(|m| prior_state(m, spec.num_features))
        .collect::<Result<Vec<_>>>()?;
    let state = EnsembleState {
        log_evidence: vec![0.0; models.len()],
        models,
    };
    Ok((state, spec.feature_maps()?))
}

/// Softmax with log-sum-exp stabilization.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl EnsembleState {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.log_evidence)
    }

    pub fn update_evidence(&mut self, log_densities: &[f64]) -> Result<()> {
        if log_densities.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "evidence update",
                expected: self.len(),
                got: log_densities.len(),
            });
        }
        if log_densities.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("NaN log-density in evidence update"));
        }
        for (acc, v) in self.log_evidence.iter_mut().zip(log_densities) {
            *acc += v;
        }
        Ok(())
    }

    /// Mixture predictions at every row of `x`.
    pub fn mixture_predict_batch(
        &self,
        feature_maps: &[FeatureMap],
        x: &DMatrix<f64>,
    ) -> Result<Vec<MixturePrediction>> {
        if feature_maps.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "ensemble feature maps",
                expected: self.len(),
                got: feature_maps.len(),
            });
        }
        let per_member = self
            .models
            .iter()
            .zip(feature_maps)
            .map(|(s, fm)| s.predict_batch(fm, x))
            .collect::<Result<Vec<_>>>()?;
        let weights = self.weights();
        Ok((0..x.nrows())
            .map(|i| {
                MixturePrediction::new(
                    weights
                        .iter()
                        .zip(&per_member)
                        .map(|(&w, preds)| (w, preds[i]))
                        .collect(),
                )
            })
            .collect())
    }

    pub fn mixture_predict(
        &self,
        feature_maps: &[FeatureMap],
        x: &[f64],
    ) -> Result<MixturePrediction> {
        let row = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.mixture_predict_batch(feature_maps, &row)?.remove(0))
    }
}

/// Weighted Gaussian mixture predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePrediction {
    pub mean: f64,
    /// Moment-matched variance.
    pub variance: f64,
    pub components: Vec<(f64, Prediction)>,
}

impl MixturePrediction {
    pub fn new(components: Vec<(f64, Prediction)>) -> Self {
        if let [(_, p)] = components.as_slice() {
            return MixturePrediction {
                mean: p.mean,
                variance: p.variance,
                components,
            };
        }
        let mean: f64 = components.iter().map(|(w, p)| w * p.mean).sum();
        let second: f64 = components
            .iter()
            .map(|(w, p)| w * (p.variance + p.mean * p.mean))
            .sum();
        MixturePrediction {
            mean,
            variance: second - mean * mean,
            components,
        }
    }

    /// Exact log-density of the mixture (not the moment-matched Gaussian).
    pub fn log_density(&self, y: f64) -> f64 {
        let logs: Vec<f64> = self
            .components
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, p)| w.ln() + p.log_density(y))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }
}
