//! Outlier injection for robustness experiments.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::data::StreamBatch;
use crate::rng::{keyed_rng, STREAM_OUTLIERS};

/// Contaminates a fraction of one epoch's observations with large positive
/// biases: `y <- y + magnitude_sd * output_sd * (1 + jitter * u)`,
/// `u ~ U(-1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierSpec {
    pub epoch: i64,
    pub fraction: f64,
    pub magnitude_sd: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Per-dimension `[lo, hi]` box in normalized spatial coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<usize>>,
    /// Defaults to the scenario seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_jitter() -> f64 {
    0.25
}

impl OutlierSpec {
    pub fn new(epoch: i64, fraction: f64, magnitude_sd: f64) -> Self {
        OutlierSpec {
            epoch,
            fraction,
            magnitude_sd,
            jitter: default_jitter(),
            region: None,
            agents: None,
            seed: None,
        }
    }

    pub fn validate(&self, dim: usize, num_agents: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::config(format!(
                "outlier fraction {} outside [0, 1]",
                self.fraction
            )));
        }
        if !(self.magnitude_sd.is_finite() && self.magnitude_sd > 0.0) {
            return Err(Error::config("outlier magnitude must be positive"));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::config("outlier jitter must lie in [0, 1]"));
        }
        if let Some(region) = &self.region {
            if region.len() != dim {
                return Err(Error::config(format!(
                    "outlier region has {} dimensions, data has {dim}",
                    region.len()
                )));
            }
            if region
                .iter()
                .any(|[lo, hi]| lo > hi || *hi < 0.0 || *lo > 1.0)
            {
                return Err(Error::config(
                    "outlier region lies outside the [0, 1] domain",
                ));
            }
        }
        if let Some(agents) = &self.agents {
            if let Some(a) = agents.iter().find(|&&a| a >= num_agents) {
                return Err(Error::config(format!("outlier agent {a} does not exist")));
            }
        }
        Ok(())
    }

    fn targets_agent(&self, k: usize) -> bool {
        self.agents.as_ref().is_none_or(|a| a.contains(&k))
    }

    fn in_region(&self, x: impl Iterator<Item = f64>) -> bool {
        match &self.region {
            None => true,
            Some(r) => x.zip(r).all(|(v, [lo, hi])| *lo <= v && v <= *hi),
        }
    }
}

/// Which observations were contaminated, as `(agent, row)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutlierReport {
    pub contaminated: Vec<(usize, usize)>,
}

/// Contaminates the batches of epoch `spec.epoch`; other batches are untouched.
///
/// Per targeted batch with `n` eligible rows, `floor(fraction * n)` rows plus
/// one more with probability equal to the remainder are chosen uniformly.
pub fn inject_outliers(
    batches: &mut [StreamBatch],
    spec: &OutlierSpec,
    output_sd: f64,
    seed: u64,
) -> Result<OutlierReport> {
    let dim = batches.first().map_or(0, |b| b.x.ncols());
    let agents = batches.iter().map(|b| b.agent_id + 1).max().unwrap_or(0);
    spec.validate(dim, agents)?;
    let mut rng = keyed_rng(spec.seed.unwrap_or(seed), STREAM_OUTLIERS);
    let mut report = OutlierReport::default();
    let shift = spec.magnitude_sd * output_sd;
    for batch in batches.iter_mut() {
        if batch.t != spec.epoch || !spec.targets_agent(batch.agent_id) {
            continue;
        }
        let eligible: Vec<usize> = (0..batch.len())
            .filter(|&i| spec.in_region(batch.x.row(i).iter().copied()))
            .collect();
        let expected = spec.fraction * eligible.len() as f64;
        let mut count = expected.floor() as usize;
        if rng.random::<f64>() < expected - expected.floor() {
            count += 1;
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), count)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        chosen.sort_unstable();
        for i in chosen {
            let u: f64 = rng.random_range(-1.0..=1.0);
            batch.y[i] += shift * (1.0 + spec.jitter * u);
            report.contaminated.push((batch.agent_id, i));
        }
    }
    Ok(report)
}
