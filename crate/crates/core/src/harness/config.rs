//! Scenario configuration files.
//!
//! A scenario is one TOML document:
//!
//! ```toml
//! seed = 7
//!
//! [topology]
//! kind = "ring"            # ring | complete | grid | custom
//! agents = 4
//! # edges = [[0, 1], [1, 2]]   (custom only)
//!
//! [consensus]
//! mode = "consensus"       # consensus | local
//! rounds = 5
//! weight_rule = "metropolis"   # metropolis | lazy_metropolis
//! share_evidence = true
//!
//! [ensemble]
//! num_features = 200
//! obs_variance = 0.05
//! lengthscales = [0.05, 0.1]
//! prior_variances = [1.0, 25.0]
//! # temporal_lengthscale = 6.0   (spatiotemporal dynamics only)
//! # base_seed = 3                (defaults to `seed`)
//!
//! [dynamics]
//! mode = "b2p"             # static | b2p | ui | spatiotemporal
//! nu = 0.9
//!
//! [robust]
//! kind = "hampel"          # none | huber | hampel
//!
//! [stream]
//! kind = "synthetic_weather"   # grid_file | synthetic_weather | static_gp | drifting_gp
//!
//! [outliers]
//! epoch = 46
//! fraction = 0.3
//! magnitude_sd = 8.0
//! agents = [0]
//!
//! [eval]
//! mode = "own_block"       # global | own_block | stitched
//! w2 = "final"             # none | final | all
//! snapshots = [46, 47]
//! ```
//!
//! Every section except `[topology]`, `[ensemble]` and `[stream]` is
//! optional. Relative `grid_file` paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::{build_topology, ConsensusConfig, Topology, TopologyKind, WeightRule};
use crate::dynamics::{DynamicsConfig, DynamicsMode};
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::features::KernelSpec;
use crate::harness::data::{SynthParams, WeatherParams};
use crate::harness::outliers::OutlierSpec;
use crate::robust::RobustConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub consensus: ConsensusSection,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub robust: RobustConfig,
    pub stream: StreamConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outliers: Option<OutlierSpec>,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    Ring,
    Complete,
    Grid,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyName,
    pub agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl TopologyConfig {
    pub fn kind(&self) -> Result<TopologyKind> {
        match (self.kind, &self.edges) {
            (TopologyName::Custom, Some(edges)) => Ok(TopologyKind::Custom(
                edges.iter().map(|&[a, b]| (a, b)).collect(),
            )),
            (TopologyName::Custom, None) => Err(Error::config("custom topology needs `edges`")),
            (_, Some(_)) => Err(Error::config("`edges` is only valid for custom topologies")),
            (TopologyName::Ring, None) => Ok(TopologyKind::Ring),
            (TopologyName::Complete, None) => Ok(TopologyKind::Complete),
            (TopologyName::Grid, None) => Ok(TopologyKind::Grid),
        }
    }

    pub fn build(&self) -> Result<Topology> {
        build_topology(&self.kind()?, self.agents)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    #[default]
    Consensus,
    /// No communication: every agent keeps a purely local model.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSection {
    #[serde(default)]
    pub mode: NetworkMode,
    #[serde(default)]
    pub rounds: usize,
    #[serde(default)]
    pub weight_rule: WeightRule,
    /// Consensus-sum the ensemble evidence along with the increments.
    #[serde(default = "yes")]
    pub share_evidence: bool,
}

fn yes() -> bool {
    true
}

impl Default for ConsensusSection {
    fn default() -> Self {
        ConsensusSection {
            mode: NetworkMode::Consensus,
            rounds: 0,
            weight_rule: WeightRule::Metropolis,
            share_evidence: true,
        }
    }
}

impl ConsensusSection {
    pub fn config(&self) -> ConsensusConfig {
        ConsensusConfig {
            rounds: self.rounds,
            weight_rule: self.weight_rule,
        }
    }
}

/// Either an explicit member list or a lengthscale x prior-variance grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub num_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lengthscales: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_variances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_lengthscale: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<KernelSpec>,
}

impl EnsembleConfig {
    pub fn spec(&self, dim: usize, seed: u64) -> Result<EnsembleSpec> {
        let base_seed = self.base_seed.unwrap_or(seed);
        let spec = if self.members.is_empty() {
            let obs = self
                .obs_variance
                .ok_or_else(|| Error::config("ensemble grid needs `obs_variance`"))?;
            if self.lengthscales.is_empty() || self.prior_variances.is_empty() {
                return Err(Error::config(
                    "ensemble grid needs `lengthscales` and `prior_variances`",
                ));
            }
            EnsembleSpec::grid(
                dim,
                &self.lengthscales,
                &self.prior_variances,
                self.temporal_lengthscale,
                obs,
                self.num_features,
                base_seed,
            )
        } else {
            if !self.lengthscales.is_empty()
                || !self.prior_variances.is_empty()
                || self.obs_variance.is_some()
                || self.temporal_lengthscale.is_some()
            {
                return Err(Error::config(
                    "give either `members` or grid ranges, not both",
                ));
            }
            let spec = EnsembleSpec {
                members: self.members.clone(),
                num_features: self.num_features,
                base_seed,
            };
            spec.validate()?;
            Ok(spec)
        }
        .map_err(|e| match e {
            Error::InvalidArgument(m) => Error::config(format!("ensemble: {m}")),
            e => e,
        })?;
        if spec.spatial_dim() != dim {
            return Err(Error::config(format!(
                "ensemble members are {}-dimensional but the stream is {dim}-dimensional",
                spec.spatial_dim()
            )));
        }
        Ok(spec)
    }

    fn has_temporal(&self) -> bool {
        self.temporal_lengthscale.is_some()
            || self
                .members
                .iter()
                .any(|m| m.temporal_lengthscale.is_some())
    }

    fn all_temporal(&self) -> bool {
        if self.members.is_empty() {
            self.temporal_lengthscale.is_some()
        } else {
            self.members
                .iter()
                .all(|m| m.temporal_lengthscale.is_some())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamConfig {
    /// `lat,lon,t,value` CSV, partitioned into spatial blocks.
    GridFile {
        path: PathBuf,
    },
    SyntheticWeather(WeatherParams),
    StaticGp(SynthParams),
    DriftingGp(SynthParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Every agent on the full test grid.
    #[default]
    Global,
    /// Every agent on its own block.
    OwnBlock,
    /// Own-block rows plus one row scoring each point by its block owner.
    Stitched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum W2Schedule {
    #[default]
    None,
    Final,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleWeighting {
    /// Sum of the agents' own (possibly robustly weighted) increments.
    #[default]
    Identical,
    /// Unweighted pooled data.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub mode: EvalMode,
    /// Per-dimension `[lo, hi]` box restricting the test points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<[f64; 2]>>,
    /// Epochs to score; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<i64>>,
    #[serde(default)]
    pub w2: W2Schedule,
    #[serde(default)]
    pub oracle_weighting: OracleWeighting,
    /// Epochs after which posterior snapshots are written.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<i64>,
}

impl EvalConfig {
    pub fn scores_epoch(&self, t: i64) -> bool {
        self.epochs.as_ref().is_none_or(|e| e.contains(&t))
    }
}

impl ScenarioConfig {
    /// Reads a config file; relative data paths become absolute.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Reads a config file after applying `key.path=value` overrides.
    pub fn load_with_overrides(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse_with_overrides(&text, base, overrides)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        Self::parse_with_overrides(text, base_dir, &[])
    }

    pub fn parse_with_overrides(
        text: &str,
        base_dir: &Path,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::config(format!("{e}")))?;
        for (key, value) in overrides {
            set_path(&mut table, key, parse_value(value))?;
        }
        let mut cfg: ScenarioConfig = table
            .try_into()
            .map_err(|e| Error::config(format!("{e}")))?;
        if let StreamConfig::GridFile { path } = &mut cfg.stream {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The fully resolved config, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("{e}")))
    }

    /// Checks everything that does not need the data itself.
    pub fn validate(&self) -> Result<()> {
        if self.topology.agents == 0 {
            return Err(Error::config("at least one agent is required"));
        }
        self.topology
            .build()
            .map_err(|e| Error::config(format!("topology: {e}")))?;
        self.dynamics
            .validate()
            .map_err(|e| Error::config(format!("dynamics: {e}")))?;
        self.robust
            .validate()
            .map_err(|e| Error::config(format!("robust: {e}")))?;
        let spatiotemporal = self.dynamics.mode == DynamicsMode::Spatiotemporal;
        if spatiotemporal && !self.ensemble.all_temporal() {
            return Err(Error::config(
                "spatiotemporal dynamics need a temporal lengthscale for every member",
            ));
        }
        if !spatiotemporal && self.ensemble.has_temporal() {
            return Err(Error::config(
                "a temporal lengthscale requires spatiotemporal dynamics",
            ));
        }
        if self.ensemble.num_features == 0 {
            return Err(Error::config("ensemble needs at least one feature"));
        }
        if let Some(region) = &self.eval.region {
            if region.iter().any(|[lo, hi]| lo > hi) {
                return Err(Error::config("eval region has lo > hi"));
            }
        }
        Ok(())
    }
}

/// Interprets an override as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("bad override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Splits `key=v1,v2,...` into the key and its values.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("sweep parameter `{spec}` is not key=v1,v2,...")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if key.trim().is_empty() || values.iter().any(String::is_empty) {
        return Err(Error::config(format!(
            "sweep parameter `{spec}` is not key=v1,v2,..."
        )));
    }
    Ok((key.trim().to_string(), values))
}
