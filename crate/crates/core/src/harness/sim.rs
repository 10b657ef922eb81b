//! The multi-agent simulator.
//!
//! Each epoch runs, per agent and ensemble member:
//! forget -> predict the incoming batch -> robust weights -> increment ->
//! consensus (or nothing, in local mode) -> apply -> evidence update,
//! then scores the configured test points. A fusion-center oracle runs in
//! lockstep when 2-Wasserstein distances are requested.
//!
//! Errors carry epoch and agent context; agent index `K` denotes the oracle.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::consensus::Consensus;
use crate::dynamics::{apply_forgetting, DynamicsConfig, DynamicsMode};
use crate::ensemble::{init_ensemble, EnsembleSpec, EnsembleState, MixturePrediction};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::harness::config::{
    EvalMode, NetworkMode, OracleWeighting, ScenarioConfig, StreamConfig, W2Schedule,
};
use crate::harness::data::{
    grid_stream, load_grid_dataset, synth_stream, synth_weather_records, Partition, Stream,
    StreamBatch, SynthKind,
};
use crate::harness::metrics::{
    npll, rmse, wasserstein2_gaussians, write_metrics_csv, AgentLabel, MetricsRecord,
};
use crate::harness::outliers::{inject_outliers, OutlierReport};
use crate::info_filter::{build_increment, Increment, Posterior, Prediction};
use crate::robust::{residuals_from_predictions, RobustConfig};

/// Builds the data stream a config describes, before outlier injection.
pub fn build_stream(cfg: &ScenarioConfig) -> Result<Stream> {
    let k = cfg.topology.agents;
    match &cfg.stream {
        StreamConfig::GridFile { path } => load_grid_dataset(path, k, Partition::SpatialBlocks),
        StreamConfig::SyntheticWeather(p) => grid_stream(&synth_weather_records(p, cfg.seed), k),
        StreamConfig::StaticGp(p) => synth_stream(SynthKind::StaticGp, p, k, cfg.seed),
        StreamConfig::DriftingGp(p) => synth_stream(SynthKind::DriftingGp, p, k, cfg.seed),
    }
}

/// One agent's ensemble plus cached factorizations of its members.
#[derive(Debug, Clone)]
struct Node {
    ensemble: EnsembleState,
    posteriors: Vec<Option<Posterior>>,
}

/// A batch's contribution for every member, before any communication.
#[derive(Debug, Clone)]
struct LocalUpdate {
    increments: Vec<Increment>,
    evidence: Vec<f64>,
}

fn forgetting_is_identity(cfg: &DynamicsConfig) -> bool {
    matches!(
        cfg.mode,
        DynamicsMode::Static | DynamicsMode::Spatiotemporal
    ) || cfg.nu == 1.0
}

impl Node {
    fn new(ensemble: EnsembleState) -> Self {
        let m = ensemble.len();
        Node {
            ensemble,
            posteriors: vec![None; m],
        }
    }

    fn forget(&mut self, cfg: &DynamicsConfig) -> Result<()> {
        if forgetting_is_identity(cfg) {
            return Ok(());
        }
        for (model, post) in self.ensemble.models.iter_mut().zip(&mut self.posteriors) {
            apply_forgetting(model, cfg)?;
            *post = None;
        }
        Ok(())
    }

    fn posterior(&mut self, m: usize) -> Result<&Posterior> {
        if self.posteriors[m].is_none() {
            self.posteriors[m] = Some(self.ensemble.models[m].factorize()?);
        }
        Ok(self.posteriors[m].as_ref().expect("just filled"))
    }

    fn predict(&mut self, phis: &[DMatrix<f64>]) -> Result<Vec<Vec<Prediction>>> {
        phis.iter()
            .enumerate()
            .map(|(m, phi)| self.posterior(m)?.predict_matrix(phi))
            .collect()
    }

    /// Prequential scoring and the (optionally robust) increment of a batch.
    fn local_update(
        &mut self,
        phis: &[DMatrix<f64>],
        y: &DVector<f64>,
        robust: &RobustConfig,
    ) -> Result<LocalUpdate> {
        let preds = self.predict(phis)?;
        let mut increments = Vec::with_capacity(phis.len());
        let mut evidence = Vec::with_capacity(phis.len());
        for (m, (phi, preds)) in phis.iter().zip(&preds).enumerate() {
            let weights = if robust.is_none() {
                None
            } else {
                let r = residuals_from_predictions(preds, y.as_slice());
                Some(robust.weights(r.as_slice())?)
            };
            let log_dens = preds.iter().zip(y.iter()).map(|(p, &yi)| p.log_density(yi));
            evidence.push(match &weights {
                None => log_dens.sum(),
                Some(w) => log_dens.zip(w).map(|(l, w)| w * l).sum(),
            });
            let obs = self.ensemble.models[m].obs_variance();
            increments.push(build_increment(phi, y, weights.as_deref(), obs)?);
        }
        Ok(LocalUpdate {
            increments,
            evidence,
        })
    }

    fn apply(&mut self, update: &LocalUpdate) -> Result<()> {
        for ((model, inc), post) in self
            .ensemble
            .models
            .iter_mut()
            .zip(&update.increments)
            .zip(&mut self.posteriors)
        {
            model.apply_increment(inc)?;
            model.symmetrize();
            *post = None;
        }
        self.ensemble.update_evidence(&update.evidence)
    }

    /// Mixture predictions at precomputed per-member feature matrices.
    fn mixture(&mut self, phis: &[DMatrix<f64>]) -> Result<Vec<MixturePrediction>> {
        let per_member = self.predict(phis)?;
        let weights = self.ensemble.weights();
        let n = per_member.first().map_or(0, Vec::len);
        Ok((0..n)
            .map(|i| {
                MixturePrediction::new(
                    weights
                        .iter()
                        .zip(&per_member)
                        .map(|(&w, p)| (w, p[i]))
                        .collect(),
                )
            })
            .collect())
    }
}

/// Member-wise 2-Wasserstein distance, averaged over members.
fn ensemble_w2(a: &mut Node, b: &mut Node) -> Result<f64> {
    let m = a.ensemble.len();
    let mut total = 0.0;
    for i in 0..m {
        let pa = a.posterior(i)?;
        let (mu_a, cov_a) = (pa.mean().clone(), pa.covariance());
        let pb = b.posterior(i)?;
        total += wasserstein2_gaussians(&mu_a, &cov_a, pb.mean(), &pb.covariance())?;
    }
    Ok(total / m as f64)
}

/// Serialized member states of one agent after one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: i64,
    pub agent: usize,
    /// The member snapshots, concatenated in member order.
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub t: i64,
    pub metrics: Vec<MetricsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub outliers: OutlierReport,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    stream: Stream,
    spec: EnsembleSpec,
    feature_maps: Vec<FeatureMap>,
    consensus: Option<Consensus>,
    nodes: Vec<Node>,
    oracle: Option<Node>,
    outliers: OutlierReport,
    next: usize,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let stream = build_stream(&cfg)?;
        Self::from_stream(cfg, stream)
    }

    /// Runs `cfg` on an explicitly supplied stream; `cfg.stream` is ignored.
    pub fn from_stream(cfg: ScenarioConfig, mut stream: Stream) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.topology.agents;
        if stream.num_agents != k {
            return Err(Error::config(format!(
                "stream is partitioned for {} agents, topology has {k}",
                stream.num_agents
            )));
        }
        if stream.epochs.iter().any(|e| e.batches.len() != k) {
            return Err(Error::config("every epoch needs one batch per agent"));
        }
        let spec = cfg.ensemble.spec(stream.dim, cfg.seed)?;
        let (ensemble, feature_maps) = init_ensemble(&spec)?;
        let consensus = match cfg.consensus.mode {
            NetworkMode::Consensus => Some(Consensus::new(
                &cfg.topology.build()?,
                cfg.consensus.config(),
            )),
            NetworkMode::Local => None,
        };
        let oracle = (cfg.eval.w2 != W2Schedule::None).then(|| Node::new(ensemble.clone()));
        let mut outliers = OutlierReport::default();
        if let Some(spec) = &cfg.outliers {
            let idx = stream.epoch_index(spec.epoch).ok_or_else(|| {
                Error::config(format!("outlier epoch {} is not in the stream", spec.epoch))
            })?;
            let sd = stream.output_sd;
            outliers = inject_outliers(&mut stream.epochs[idx].batches, spec, sd, cfg.seed)?;
        }
        Ok(Simulation {
            nodes: vec![Node::new(ensemble); k],
            cfg,
            stream,
            spec,
            feature_maps,
            consensus,
            oracle,
            outliers,
            next: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn stream(&self) -> &Stream {
        &self.stream
    }

    pub fn ensemble_spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn feature_maps(&self) -> &[FeatureMap] {
        &self.feature_maps
    }

    pub fn agents(&self) -> impl Iterator<Item = &EnsembleState> {
        self.nodes.iter().map(|n| &n.ensemble)
    }

    /// The fusion-center ensemble, present when w2 metrics are enabled.
    pub fn oracle(&self) -> Option<&EnsembleState> {
        self.oracle.as_ref().map(|n| &n.ensemble)
    }

    pub fn outliers(&self) -> &OutlierReport {
        &self.outliers
    }

    pub fn is_finished(&self) -> bool {
        self.next >= self.stream.num_epochs()
    }

    fn inputs(&self, x: &DMatrix<f64>, t: i64) -> DMatrix<f64> {
        if self.cfg.dynamics.uses_time_input() {
            x.clone().insert_column(x.ncols(), t as f64)
        } else {
            x.clone()
        }
    }

    fn feature_matrices(&self, x: &DMatrix<f64>, t: i64) -> Result<Vec<DMatrix<f64>>> {
        let xa = self.inputs(x, t);
        self.feature_maps
            .iter()
            .map(|fm| fm.feature_matrix(&xa))
            .collect()
    }

    /// Advances one epoch; `None` once the stream is exhausted.
    pub fn step(&mut self) -> Option<Result<EpochReport>> {
        if self.is_finished() {
            return None;
        }
        let idx = self.next;
        self.next += 1;
        Some(self.run_epoch(idx))
    }

    fn run_epoch(&mut self, idx: usize) -> Result<EpochReport> {
        let t = self.stream.epochs[idx].t;
        let k = self.nodes.len();
        let dynamics = self.cfg.dynamics;
        let robust = self.cfg.robust;

        let phis = self.stream.epochs[idx]
            .batches
            .iter()
            .map(|b| self.feature_matrices(&b.x, t))
            .collect::<Result<Vec<_>>>()?;
        let batches = &self.stream.epochs[idx].batches;
        let locals = self
            .nodes
            .par_iter_mut()
            .zip(batches.par_iter())
            .zip(phis.par_iter())
            .map(|((node, batch), phi)| {
                node.forget(&dynamics)?;
                node.local_update(phi, &batch.y, &robust)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            .map(|(a, r)| r.map_err(|e| e.at(t, a)))
            .collect::<Result<Vec<_>>>()?;

        let pooled = match &mut self.oracle {
            None => None,
            Some(oracle) => Some(
                match self.cfg.eval.oracle_weighting {
                    OracleWeighting::Identical => {
                        oracle.forget(&dynamics).and_then(|_| sum_updates(&locals))
                    }
                    OracleWeighting::Unit => pooled_unit_update(oracle, &dynamics, batches, &phis),
                }
                .map_err(|e| e.at(t, k))?,
            ),
        };

        let combined = match &self.consensus {
            None => locals,
            Some(c) => self.gossip(c, locals).map_err(|e| e.at(t, 0))?,
        };
        self.nodes
            .par_iter_mut()
            .zip(combined.par_iter())
            .map(|(node, update)| node.apply(update))
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            .try_for_each(|(a, r)| r.map_err(|e| e.at(t, a)))?;
        if let (Some(oracle), Some(pooled)) = (&mut self.oracle, &pooled) {
            oracle.apply(pooled).map_err(|e| e.at(t, k))?;
        }

        let metrics = if self.cfg.eval.scores_epoch(t) {
            self.score(idx)?
        } else {
            Vec::new()
        };
        let snapshots = if self.cfg.eval.snapshots.contains(&t) {
            self.snapshots(t)?
        } else {
            Vec::new()
        };
        let outliers = match &self.cfg.outliers {
            Some(spec) if spec.epoch == t => self.outliers.clone(),
            _ => OutlierReport::default(),
        };
        Ok(EpochReport {
            t,
            metrics,
            snapshots,
            outliers,
        })
    }

    /// Consensus over every member's increment, plus evidence if shared.
    fn gossip(&self, consensus: &Consensus, locals: Vec<LocalUpdate>) -> Result<Vec<LocalUpdate>> {
        let share = self.cfg.consensus.share_evidence;
        let m = self.spec.len();
        let n = 2 * self.spec.num_features;
        let block = n * n + n;
        let flat: Vec<DVector<f64>> = locals
            .iter()
            .map(|u| {
                let mut v = Vec::with_capacity(m * block + m);
                for inc in &u.increments {
                    v.extend_from_slice(inc.to_flat().as_slice());
                }
                if share {
                    v.extend_from_slice(&u.evidence);
                }
                DVector::from_vec(v)
            })
            .collect();
        let summed = consensus.sum(flat)?;
        summed
            .iter()
            .zip(&locals)
            .map(|(v, local)| {
                let v = v.as_slice();
                let increments = (0..m)
                    .map(|i| Increment::from_flat(&v[i * block..(i + 1) * block], n))
                    .collect::<Result<Vec<_>>>()?;
                let evidence = if share {
                    v[m * block..].to_vec()
                } else {
                    local.evidence.clone()
                };
                Ok(LocalUpdate {
                    increments,
                    evidence,
                })
            })
            .collect()
    }

    fn test_rows(&self, idx: usize) -> Vec<usize> {
        let test = &self.stream.epochs[idx].test;
        (0..test.y.len())
            .filter(|&i| match &self.cfg.eval.region {
                None => true,
                Some(r) => test
                    .x
                    .row(i)
                    .iter()
                    .zip(r)
                    .all(|(v, [lo, hi])| lo <= v && v <= hi),
            })
            .collect()
    }

    fn score(&mut self, idx: usize) -> Result<Vec<MetricsRecord>> {
        let t = self.stream.epochs[idx].t;
        let k = self.nodes.len();
        let rows = self.test_rows(idx);
        let test = &self.stream.epochs[idx].test;
        let mode = self.cfg.eval.mode;
        let per_agent_rows: Vec<Vec<usize>> = (0..k)
            .map(|a| match mode {
                EvalMode::Global => rows.clone(),
                EvalMode::OwnBlock | EvalMode::Stitched => rows
                    .iter()
                    .copied()
                    .filter(|&i| test.owner[i] == a)
                    .collect(),
            })
            .collect();
        if let Some(a) = per_agent_rows.iter().position(Vec::is_empty) {
            return Err(Error::config(format!("agent {a} has no test points to score")).at(t, a));
        }
        let phis = per_agent_rows
            .iter()
            .map(|r| self.feature_matrices(&test.x.select_rows(r), t))
            .collect::<Result<Vec<_>>>()?;
        let preds = self
            .nodes
            .par_iter_mut()
            .zip(phis.par_iter())
            .map(|(node, phi)| node.mixture(phi))
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            .map(|(a, r)| r.map_err(|e| e.at(t, a)))
            .collect::<Result<Vec<_>>>()?;

        let final_t = self.stream.epochs.last().map(|e| e.t);
        let want_w2 = match self.cfg.eval.w2 {
            W2Schedule::None => false,
            W2Schedule::Final => Some(t) == final_t,
            W2Schedule::All => true,
        };
        let mut w2 = vec![None; k];
        if want_w2 {
            let oracle = self
                .oracle
                .as_mut()
                .expect("oracle exists when w2 is enabled");
            for (a, node) in self.nodes.iter_mut().enumerate() {
                w2[a] = Some(ensemble_w2(node, oracle).map_err(|e| e.at(t, a))?);
            }
        }

        let mut records = Vec::with_capacity(k + 1);
        for (a, (p, r)) in preds.iter().zip(&per_agent_rows).enumerate() {
            let truth: Vec<f64> = r.iter().map(|&i| test.y[i]).collect();
            records.push(
                score_row(t, AgentLabel::Agent(a), p, &truth, w2[a]).map_err(|e| e.at(t, a))?,
            );
        }
        if mode == EvalMode::Stitched {
            let mut stitched = Vec::with_capacity(rows.len());
            let mut truth = Vec::with_capacity(rows.len());
            let mut cursor = vec![0usize; k];
            for &i in &rows {
                let a = test.owner[i];
                stitched.push(preds[a][cursor[a]].clone());
                cursor[a] += 1;
                truth.push(test.y[i]);
            }
            records.push(score_row(t, AgentLabel::Stitched, &stitched, &truth, None)?);
        }
        Ok(records)
    }

    fn snapshots(&self, t: i64) -> Result<Vec<Snapshot>> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(agent, node)| {
                let mut bytes = Vec::new();
                for model in &node.ensemble.models {
                    model.write_snapshot(&mut bytes)?;
                }
                Ok(Snapshot { t, agent, bytes })
            })
            .collect()
    }
}

fn score_row(
    t: i64,
    agent: AgentLabel,
    preds: &[MixturePrediction],
    truth: &[f64],
    w2: Option<f64>,
) -> Result<MetricsRecord> {
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    Ok(MetricsRecord {
        t,
        agent,
        rmse: rmse(&means, truth)?,
        npll: npll(preds, truth)?,
        w2_to_centralized: w2,
    })
}

fn sum_updates(locals: &[LocalUpdate]) -> Result<LocalUpdate> {
    let mut total = locals[0].clone();
    for u in &locals[1..] {
        for (acc, inc) in total.increments.iter_mut().zip(&u.increments) {
            *acc += inc;
        }
        for (acc, e) in total.evidence.iter_mut().zip(&u.evidence) {
            *acc += e;
        }
    }
    Ok(total)
}

/// The oracle's own unweighted update from all agents' batches.
fn pooled_unit_update(
    oracle: &mut Node,
    dynamics: &DynamicsConfig,
    batches: &[StreamBatch],
    phis: &[Vec<DMatrix<f64>>],
) -> Result<LocalUpdate> {
    oracle.forget(dynamics)?;
    let parts = batches
        .iter()
        .zip(phis)
        .map(|(b, phi)| oracle.local_update(phi, &b.y, &RobustConfig::None))
        .collect::<Result<Vec<_>>>()?;
    sum_updates(&parts)
}

/// Everything a finished run produces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl RunOutput {
    pub fn metrics_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &self.metrics)?;
        Ok(String::from_utf8(buf).expect("metrics are ASCII"))
    }

    /// Writes `metrics.csv`, `config_resolved.txt` and
    /// `snapshots/epoch_<t>_agent_<k>.bin` under `dir`.
    pub fn write_to(&self, dir: &Path, cfg: &ScenarioConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv()?)?;
        fs::write(dir.join("config_resolved.txt"), cfg.to_toml()?)?;
        if !self.snapshots.is_empty() {
            let snap_dir = dir.join("snapshots");
            fs::create_dir_all(&snap_dir)?;
            for s in &self.snapshots {
                fs::write(
                    snap_dir.join(format!("epoch_{}_agent_{}.bin", s.t, s.agent)),
                    &s.bytes,
                )?;
            }
        }
        Ok(())
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    run_simulation(Simulation::new(cfg.clone())?)
}

pub fn run_simulation(mut sim: Simulation) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    while let Some(report) = sim.step() {
        let report = report?;
        out.metrics.extend(report.metrics);
        out.snapshots.extend(report.snapshots);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn config(extra: &str) -> ScenarioConfig {
        let text = format!(
            r#"
            seed = 3
            [topology]
            kind = "ring"
            agents = 3
            [consensus]
            rounds = 2
            [ensemble]
            num_features = 8
            obs_variance = 0.05
            lengthscales = [0.3, 0.6]
            prior_variances = [1.0]
            [stream]
            kind = "static_gp"
            epochs = 3
            points_per_agent = 6
            test_grid = 6
            {extra}
            "#
        );
        ScenarioConfig::parse(&text, Path::new("")).unwrap()
    }

    #[test]
    fn produces_one_row_per_agent_and_epoch() {
        let out = run_scenario(&config("")).unwrap();
        assert_eq!(out.metrics.len(), 9);
        assert!(out
            .metrics
            .iter()
            .all(|r| r.rmse >= 0.0 && r.npll.is_finite()));
        assert!(out.metrics.iter().all(|r| r.w2_to_centralized.is_none()));
    }

    #[test]
    fn stitched_mode_adds_a_row() {
        let mut cfg = config("");
        cfg.eval.mode = EvalMode::Stitched;
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.metrics.len(), 12);
        assert_eq!(out.metrics[3].agent, AgentLabel::Stitched);
    }

    #[test]
    fn w2_only_at_final_epoch() {
        let mut cfg = config("");
        cfg.eval.w2 = W2Schedule::Final;
        let out = run_scenario(&cfg).unwrap();
        for r in &out.metrics {
            assert_eq!(r.w2_to_centralized.is_some(), r.t == 2, "{r:?}");
        }
    }

    #[test]
    fn snapshots_hold_every_member() {
        let mut cfg = config("");
        cfg.eval.snapshots = vec![1];
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.snapshots.len(), 3);
        let mut r = out.snapshots[0].bytes.as_slice();
        let a = crate::info_filter::InfoState::read_snapshot(&mut r).unwrap();
        let b = crate::info_filter::InfoState::read_snapshot(&mut r).unwrap();
        assert!(r.is_empty());
        assert_eq!(a.dim(), 16);
        assert_eq!(b.dim(), 16);
    }

    #[test]
    fn outlier_epoch_outside_stream_is_a_config_error() {
        let cfg = config("[outliers]\nepoch = 9\nfraction = 0.3\nmagnitude_sd = 8.0\n");
        assert!(matches!(Simulation::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn step_reports_then_stops() {
        let mut sim = Simulation::new(config("")).unwrap();
        let ts: Vec<i64> = std::iter::from_fn(|| sim.step())
            .map(|r| r.unwrap().t)
            .collect();
        assert_eq!(ts, [0, 1, 2]);
        assert!(sim.step().is_none());
    }
}
