//! Streaming data sources: gridded CSV files and synthetic generators.
//!
//! Every source produces a [`Stream`]: one [`Epoch`] per time step, each
//! holding one [`StreamBatch`] per agent plus a clean [`TestSet`] used for
//! metrics. Space is split into `K` contiguous rectangular blocks, one per
//! agent.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consensus::block_shape;
use crate::error::{Error, Result};
use crate::features::{sample_frequencies_for_member, FeatureMap, KernelSpec};
use crate::rng::{
    keyed_rng, STREAM_INPUTS, STREAM_NOISE, STREAM_TRUTH, STREAM_TRUTH_BASIS, STREAM_WEATHER,
};

/// One agent's observations at one epoch. `x` is `N x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    pub agent_id: usize,
    pub t: i64,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl StreamBatch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Clean evaluation points; `owner[i]` is the agent whose block holds row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub owner: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub t: i64,
    pub batches: Vec<StreamBatch>,
    pub test: TestSet,
}

/// Min-max scaling of coordinates and standardization of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub value_mean: f64,
    pub value_sd: f64,
}

fn unit(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

impl Normalization {
    pub fn normalize_coords(&self, lat: f64, lon: f64) -> [f64; 2] {
        [
            unit(lat, self.lat_min, self.lat_max),
            unit(lon, self.lon_min, self.lon_max),
        ]
    }

    pub fn normalize_value(&self, v: f64) -> f64 {
        (v - self.value_mean) / self.value_sd
    }

    pub fn denormalize_value(&self, v: f64) -> f64 {
        v * self.value_sd + self.value_mean
    }

    /// Predictive standard deviations scale with the value sd.
    pub fn denormalize_sd(&self, sd: f64) -> f64 {
        sd * self.value_sd
    }
}

/// Ground truth of a synthetic GP stream: `f_t(x) = phi(x) . theta_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub feature_map: FeatureMap,
    /// One weight vector per epoch.
    pub thetas: Vec<DVector<f64>>,
}

impl GroundTruth {
    pub fn value(&self, epoch: usize, x: &[f64]) -> Result<f64> {
        Ok(self.feature_map.feature_map(x)?.dot(&self.thetas[epoch]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub num_agents: usize,
    /// Spatial input dimension `d`.
    pub dim: usize,
    pub epochs: Vec<Epoch>,
    /// Standard deviation of the clean outputs, in stream units.
    pub output_sd: f64,
    pub normalization: Option<Normalization>,
    pub truth: Option<GroundTruth>,
}

impl Stream {
    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn epoch_index(&self, t: i64) -> Option<usize> {
        self.epochs.iter().position(|e| e.t == t)
    }
}

/// Raw row of a gridded dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub lat: f64,
    pub lon: f64,
    pub t: i64,
    pub value: f64,
}

/// How agents split the spatial domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    #[default]
    SpatialBlocks,
}

/// Reads `lat,lon,t,value` rows (header required) and builds the stream.
pub fn load_grid_dataset(path: &Path, num_agents: usize, _partition: Partition) -> Result<Stream> {
    let records = read_grid_csv(path)?;
    grid_stream(&records, num_agents)
}

pub fn read_grid_csv(path: &Path) -> Result<Vec<GridRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["lat", "lon", "t", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 1,
            message: format!(
                "expected header `lat,lon,t,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<GridRecord>() {
        let rec = row.map_err(|e| csv_error(path, e))?;
        if !(rec.lat.is_finite() && rec.lon.is_finite() && rec.value.is_finite()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: out.len() as u64 + 2,
                message: "non-finite value".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            path: path.to_owned(),
            line,
            message: match kind {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                csv::ErrorKind::UnequalLengths {
                    expected_len, len, ..
                } => {
                    format!("expected {expected_len} fields, found {len}")
                }
                other => format!("{other:?}"),
            },
        },
    }
}

fn sorted_distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Builds a stream from gridded records; see [`load_grid_dataset`].
pub fn grid_stream(records: &[GridRecord], num_agents: usize) -> Result<Stream> {
    if records.is_empty() {
        return Err(Error::config("grid dataset is empty"));
    }
    if num_agents == 0 {
        return Err(Error::config("at least one agent is required"));
    }
    let lats = sorted_distinct(records.iter().map(|r| r.lat));
    let lons = sorted_distinct(records.iter().map(|r| r.lon));
    let (rows, cols) = block_shape(num_agents);
    if rows > lats.len() || cols > lons.len() {
        return Err(Error::config(format!(
            "{num_agents} agents need a {rows}x{cols} block grid but the data has only {}x{} cells",
            lats.len(),
            lons.len()
        )));
    }
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.value).sum::<f64>() / n;
    let var = records
        .iter()
        .map(|r| (r.value - mean).powi(2))
        .sum::<f64>()
        / n;
    if var.is_nan() || var <= 0.0 {
        return Err(Error::config("grid values have zero variance"));
    }
    let norm = Normalization {
        lat_min: lats[0],
        lat_max: *lats.last().unwrap(),
        lon_min: lons[0],
        lon_max: *lons.last().unwrap(),
        value_mean: mean,
        value_sd: var.sqrt(),
    };
    let owner_of = |r: &GridRecord| {
        let i = lats.binary_search_by(|v| v.total_cmp(&r.lat)).unwrap();
        let j = lons.binary_search_by(|v| v.total_cmp(&r.lon)).unwrap();
        (i * rows / lats.len()) * cols + j * cols / lons.len()
    };

    let times: Vec<i64> = {
        let mut t: Vec<i64> = records.iter().map(|r| r.t).collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    let mut epochs = Vec::with_capacity(times.len());
    for &t in &times {
        let mut rows_t: Vec<&GridRecord> = records.iter().filter(|r| r.t == t).collect();
        rows_t.sort_by(|a, b| a.lat.total_cmp(&b.lat).then(a.lon.total_cmp(&b.lon)));
        let owner: Vec<usize> = rows_t.iter().map(|r| owner_of(r)).collect();
        let x = DMatrix::from_fn(rows_t.len(), 2, |i, c| {
            norm.normalize_coords(rows_t[i].lat, rows_t[i].lon)[c]
        });
        let y: Vec<f64> = rows_t
            .iter()
            .map(|r| norm.normalize_value(r.value))
            .collect();
        let test = TestSet { x, y, owner };
        let batches = batches_from_test(&test, num_agents, t);
        epochs.push(Epoch { t, batches, test });
    }
    Ok(Stream {
        num_agents,
        dim: 2,
        epochs,
        output_sd: 1.0,
        normalization: Some(norm),
        truth: None,
    })
}

fn batches_from_test(test: &TestSet, num_agents: usize, t: i64) -> Vec<StreamBatch> {
    (0..num_agents)
        .map(|k| {
            let idx: Vec<usize> = (0..test.y.len()).filter(|&i| test.owner[i] == k).collect();
            StreamBatch {
                agent_id: k,
                t,
                x: test.x.select_rows(&idx),
                y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| test.y[i])),
            }
        })
        .collect()
}

/// Agent owning a point of `[0, 1]^d` under the block partition.
pub fn block_owner(x: &[f64], num_agents: usize) -> usize {
    let (rows, cols) = block_shape(num_agents);
    let cell =
        |v: f64, n: usize| ((v * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
    if x.len() == 1 {
        return cell(x[0], num_agents);
    }
    cell(x[0], rows) * cols + cell(x[1], cols)
}

/// Axis-aligned box of agent `k`'s block (`[lo, hi)` per dimension).
pub fn block_bounds(k: usize, num_agents: usize, dim: usize) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0, 1.0]; dim];
    if dim == 1 {
        let n = num_agents as f64;
        out[0] = [k as f64 / n, (k + 1) as f64 / n];
        return out;
    }
    let (rows, cols) = block_shape(num_agents);
    let (r, c) = (k / cols, k % cols);
    out[0] = [r as f64 / rows as f64, (r + 1) as f64 / rows as f64];
    out[1] = [c as f64 / cols as f64, (c + 1) as f64 / cols as f64];
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    StaticGp,
    DriftingGp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    /// Spatial dimension.
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::points_per_agent")]
    pub points_per_agent: usize,
    #[serde(default = "defaults::noise_variance")]
    pub noise_variance: f64,
    #[serde(default = "defaults::truth_lengthscale")]
    pub truth_lengthscale: f64,
    #[serde(default = "defaults::truth_features")]
    pub truth_features: usize,
    #[serde(default = "defaults::truth_prior_variance")]
    pub truth_prior_variance: f64,
    /// Per-epoch random-walk step sd of the truth weights (drifting only).
    #[serde(default)]
    pub drift_scale: f64,
    /// Test points per dimension.
    #[serde(default = "defaults::test_grid")]
    pub test_grid: usize,
}

mod defaults {
    pub fn dim() -> usize {
        2
    }
    pub fn epochs() -> usize {
        20
    }
    pub fn points_per_agent() -> usize {
        20
    }
    pub fn noise_variance() -> f64 {
        0.01
    }
    pub fn truth_lengthscale() -> f64 {
        0.3
    }
    pub fn truth_features() -> usize {
        50
    }
    pub fn truth_prior_variance() -> f64 {
        1.0
    }
    pub fn test_grid() -> usize {
        15
    }
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            dim: defaults::dim(),
            epochs: defaults::epochs(),
            points_per_agent: defaults::points_per_agent(),
            noise_variance: defaults::noise_variance(),
            truth_lengthscale: defaults::truth_lengthscale(),
            truth_features: defaults::truth_features(),
            truth_prior_variance: defaults::truth_prior_variance(),
            drift_scale: 0.0,
            test_grid: defaults::test_grid(),
        }
    }
}

fn test_grid_points(dim: usize, per_dim: usize) -> DMatrix<f64> {
    let total = per_dim.pow(dim as u32);
    let coord = |i: usize| (i as f64 + 0.5) / per_dim as f64;
    DMatrix::from_fn(total, dim, |row, c| {
        coord((row / per_dim.pow((dim - 1 - c) as u32)) % per_dim)
    })
}

/// Synthetic stream whose truth is an RF-GP draw with known weights.
pub fn synth_stream(
    kind: SynthKind,
    params: &SynthParams,
    num_agents: usize,
    seed: u64,
) -> Result<Stream> {
    let p = params;
    if p.dim == 0 || p.epochs == 0 || p.test_grid == 0 || num_agents == 0 {
        return Err(Error::config(
            "synthetic stream needs positive dim, epochs, test grid and agents",
        ));
    }
    if !(p.noise_variance >= 0.0 && p.drift_scale >= 0.0) {
        return Err(Error::config(
            "noise variance and drift scale must be non-negative",
        ));
    }
    let truth_spec = KernelSpec::new(
        vec![p.truth_lengthscale; p.dim],
        None,
        p.truth_prior_variance,
        1.0,
    )?;
    let fm = sample_frequencies_for_member(
        &truth_spec,
        p.truth_features,
        p.dim,
        seed,
        STREAM_TRUTH_BASIS,
    )?;

    let mut truth_rng = keyed_rng(seed, STREAM_TRUTH);
    let mut input_rng = keyed_rng(seed, STREAM_INPUTS);
    let mut noise_rng = keyed_rng(seed, STREAM_NOISE);

    let n_theta = fm.embedding_dim();
    let sd0 = p.truth_prior_variance.sqrt();
    let mut theta = DVector::from_fn(n_theta, |_, _| {
        sd0 * truth_rng.sample::<f64, _>(StandardNormal)
    });
    let test_x = test_grid_points(p.dim, p.test_grid);
    let test_owner: Vec<usize> = test_x
        .row_iter()
        .map(|r| block_owner(&r.iter().copied().collect::<Vec<_>>(), num_agents))
        .collect();
    let phi_test = fm.feature_matrix(&test_x)?;
    let noise_sd = p.noise_variance.sqrt();

    let mut thetas = Vec::with_capacity(p.epochs);
    let mut epochs = Vec::with_capacity(p.epochs);
    for e in 0..p.epochs {
        if e > 0 && kind == SynthKind::DriftingGp {
            for v in theta.iter_mut() {
                let step: f64 = truth_rng.sample(StandardNormal);
                *v += p.drift_scale * step;
            }
        }
        let t = e as i64;
        let mut batches = Vec::with_capacity(num_agents);
        for k in 0..num_agents {
            let bounds = block_bounds(k, num_agents, p.dim);
            let mut x = DMatrix::zeros(p.points_per_agent, p.dim);
            for i in 0..p.points_per_agent {
                for (c, [lo, hi]) in bounds.iter().enumerate() {
                    let u: f64 = input_rng.random();
                    x[(i, c)] = lo + (hi - lo) * u;
                }
            }
            let clean = fm.feature_matrix(&x)?.transpose() * &theta;
            let y = DVector::from_fn(p.points_per_agent, |i, _| {
                let z: f64 = noise_rng.sample(StandardNormal);
                clean[i] + noise_sd * z
            });
            batches.push(StreamBatch {
                agent_id: k,
                t,
                x,
                y,
            });
        }
        let test_y: Vec<f64> = (phi_test.transpose() * &theta).iter().copied().collect();
        epochs.push(Epoch {
            t,
            batches,
            test: TestSet {
                x: test_x.clone(),
                y: test_y,
                owner: test_owner.clone(),
            },
        });
        thetas.push(theta.clone());
    }
    let all: Vec<f64> = epochs
        .iter()
        .flat_map(|e| e.test.y.iter().copied())
        .collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let output_sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
    Ok(Stream {
        num_agents,
        dim: p.dim,
        epochs,
        output_sd,
        normalization: None,
        truth: Some(GroundTruth {
            feature_map: fm,
            thetas,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherParams {
    #[serde(default = "weather_defaults::side")]
    pub rows: usize,
    #[serde(default = "weather_defaults::side")]
    pub cols: usize,
    #[serde(default = "weather_defaults::epochs")]
    pub epochs: usize,
    /// Measurement noise sd in degrees.
    #[serde(default = "weather_defaults::noise_sd")]
    pub noise_sd: f64,
}

mod weather_defaults {
    pub fn side() -> usize {
        20
    }
    pub fn epochs() -> usize {
        48
    }
    pub fn noise_sd() -> f64 {
        0.5
    }
}

impl Default for WeatherParams {
    fn default() -> Self {
        WeatherParams {
            rows: weather_defaults::side(),
            cols: weather_defaults::side(),
            epochs: weather_defaults::epochs(),
            noise_sd: weather_defaults::noise_sd(),
        }
    }
}

/// Monthly temperature-like field on a 1-degree grid starting at 35N 60E:
/// a latitudinal gradient, a seasonal cycle whose amplitude grows
/// northwards, and a few slowly drifting warm/cold anomalies.
pub fn synth_weather_records(params: &WeatherParams, seed: u64) -> Vec<GridRecord> {
    let mut rng = keyed_rng(seed, STREAM_WEATHER);
    let (lat0, lon0) = (35.0, 60.0);
    let (h, w) = (params.rows as f64, params.cols as f64);
    struct Anomaly {
        lat: f64,
        lon: f64,
        dlat: f64,
        dlon: f64,
        radius: f64,
        amp: f64,
    }
    let anomalies: Vec<Anomaly> = (0..4)
        .map(|_| Anomaly {
            lat: rng.random_range(0.0..h),
            lon: rng.random_range(0.0..w),
            dlat: rng.random_range(-0.15..0.15),
            dlon: rng.random_range(-0.15..0.15),
            radius: rng.random_range(2.0..5.0),
            amp: rng.random_range(-3.0..3.0),
        })
        .collect();
    let mut out = Vec::with_capacity(params.rows * params.cols * params.epochs);
    for t in 0..params.epochs {
        let tf = t as f64;
        for i in 0..params.rows {
            for j in 0..params.cols {
                let (fi, fj) = (i as f64, j as f64);
                let season_amp = 10.0 + 0.4 * fi;
                let mut v = 14.0 - 0.7 * fi
                    + 0.15 * fj
                    + season_amp * (2.0 * std::f64::consts::PI * (tf - 3.5) / 12.0).sin();
                for a in &anomalies {
                    let (ci, cj) = (a.lat + a.dlat * tf, a.lon + a.dlon * tf);
                    let r2 = (fi - ci).powi(2) + (fj - cj).powi(2);
                    v += a.amp * (-r2 / (2.0 * a.radius * a.radius)).exp();
                }
                let z: f64 = rng.sample(StandardNormal);
                out.push(GridRecord {
                    lat: lat0 + fi,
                    lon: lon0 + fj,
                    t: t as i64,
                    value: v + params.noise_sd * z,
                });
            }
        }
    }
    out
}

pub fn write_grid_csv(path: &Path, records: &[GridRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info_filter::{compute_increment, prior_state};
    use std::io::Write;

    fn square_grid(side: usize, epochs: usize) -> Vec<GridRecord> {
        let mut v = Vec::new();
        for t in 0..epochs {
            for i in 0..side {
                for j in 0..side {
                    v.push(GridRecord {
                        lat: 40.0 + i as f64 * 0.5,
                        lon: 70.0 + j as f64 * 0.5,
                        t: t as i64,
                        value: (i * side + j) as f64 + t as f64,
                    });
                }
            }
        }
        v
    }

    #[test]
    fn equal_blocks_on_square_grid() {
        let s = grid_stream(&square_grid(20, 2), 4).unwrap();
        assert_eq!(s.num_epochs(), 2);
        for b in &s.epochs[0].batches {
            assert_eq!(b.len(), 100);
        }
        // Agent 0 holds the low-lat, low-lon quadrant.
        let b0 = &s.epochs[0].batches[0];
        assert!(b0.x.column(0).iter().all(|&v| v < 0.5));
        assert!(b0.x.column(1).iter().all(|&v| v < 0.5));
        let b3 = &s.epochs[0].batches[3];
        assert!(b3.x.column(0).iter().all(|&v| v > 0.5));
        assert_eq!(s.epochs[0].test.y.len(), 400);
    }

    #[test]
    fn normalization_round_trip() {
        let recs = square_grid(6, 3);
        let s = grid_stream(&recs, 4).unwrap();
        let norm = s.normalization.unwrap();
        let all: Vec<f64> = s
            .epochs
            .iter()
            .flat_map(|e| e.test.y.iter().copied())
            .collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!(mean.abs() < 1e-12);
        for r in &recs {
            let back = norm.denormalize_value(norm.normalize_value(r.value));
            assert!((back - r.value).abs() < 1e-10);
            let c = norm.normalize_coords(r.lat, r.lon);
            assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn too_many_agents_for_grid_is_config_error() {
        assert!(matches!(
            grid_stream(&square_grid(3, 1), 5),
            Err(Error::Config(_))
        ));
        assert!(grid_stream(&square_grid(3, 1), 9).is_ok());
    }

    #[test]
    fn csv_parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "lat,lon,t,value\n1,2,0,3.5\n1,2,x,4").unwrap();
        drop(f);
        match read_grid_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "a,b,c,d\n1,2,3,4\n").unwrap();
        assert!(matches!(
            read_grid_csv(&path),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_grid_csv(&dir.path().join("missing.csv")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn csv_round_trip_through_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let recs = synth_weather_records(
            &WeatherParams {
                rows: 6,
                cols: 8,
                epochs: 3,
                noise_sd: 0.5,
            },
            1,
        );
        write_grid_csv(&path, &recs).unwrap();
        let back = read_grid_csv(&path).unwrap();
        assert_eq!(back, recs);
        let s = load_grid_dataset(&path, 4, Partition::SpatialBlocks).unwrap();
        assert_eq!(s, grid_stream(&recs, 4).unwrap());
    }

    #[test]
    fn synthetic_streams_are_seeded() {
        let p = SynthParams::default();
        let a = synth_stream(SynthKind::DriftingGp, &p, 4, 3).unwrap();
        let b = synth_stream(SynthKind::DriftingGp, &p, 4, 3).unwrap();
        assert_eq!(a, b);
        // With zero drift both kinds coincide.
        let s = synth_stream(SynthKind::StaticGp, &p, 4, 3).unwrap();
        assert_eq!(a, s);
        let drift = SynthParams {
            drift_scale: 0.1,
            ..p
        };
        let d = synth_stream(SynthKind::DriftingGp, &drift, 4, 3).unwrap();
        assert_ne!(d.epochs[5].test.y, s.epochs[5].test.y);
        assert_eq!(d.epochs[0].batches[0].x, s.epochs[0].batches[0].x);
    }

    #[test]
    fn synthetic_inputs_stay_in_agent_blocks() {
        let p = SynthParams {
            epochs: 2,
            ..SynthParams::default()
        };
        let s = synth_stream(SynthKind::StaticGp, &p, 6, 0).unwrap();
        for b in &s.epochs[1].batches {
            for r in b.x.row_iter() {
                let row: Vec<f64> = r.iter().copied().collect();
                assert_eq!(block_owner(&row, 6), b.agent_id);
            }
        }
        assert_eq!(s.epochs[0].test.x.nrows(), 15 * 15);
    }

    #[test]
    fn true_basis_recovers_truth_weights() {
        let p = SynthParams {
            dim: 1,
            epochs: 40,
            points_per_agent: 25,
            noise_variance: 1e-10,
            truth_lengthscale: 0.05,
            truth_features: 8,
            ..SynthParams::default()
        };
        let s = synth_stream(SynthKind::StaticGp, &p, 2, 9).unwrap();
        let truth = s.truth.as_ref().unwrap();
        let spec = KernelSpec::new(vec![p.truth_lengthscale], None, 1.0, 1e-10).unwrap();
        let mut state = prior_state(&spec, 8).unwrap();
        for e in &s.epochs {
            for b in &e.batches {
                let phi = truth.feature_map.feature_matrix(&b.x).unwrap();
                state
                    .apply_increment(&compute_increment(&phi, &b.y, 1e-10).unwrap())
                    .unwrap();
            }
        }
        let (mu, _) = state.posterior_moments().unwrap();
        let rel = (&mu - &truth.thetas[0]).norm() / truth.thetas[0].norm();
        assert!(rel <= 1e-3, "relative error {rel}");
    }

    #[test]
    fn test_grid_covers_unit_square() {
        let g = test_grid_points(2, 3);
        assert_eq!(g.nrows(), 9);
        assert_eq!(
            g.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0 / 6.0, 1.0 / 6.0]
        );
        assert_eq!(
            g.row(1).iter().copied().collect::<Vec<_>>(),
            vec![1.0 / 6.0, 0.5]
        );
        assert_eq!(
            g.row(8).iter().copied().collect::<Vec<_>>(),
            vec![5.0 / 6.0, 5.0 / 6.0]
        );
    }
}
