//! Information-form posterior of the RF-GP Bayesian linear model.
//!
//! The weight posterior `N(mu, Sigma)` is stored as the precision
//! `D = Sigma^{-1}` and the information vector `eta = D mu`. A batch with
//! feature matrix `Phi` (`2J x N`) and targets `y` contributes the additive
//! increment
//!
//! ```text
//! P = Phi Phi^T / obs_var,    s = Phi y / obs_var
//! ```
//!
//! so online learning, fusion-center pooling and consensus all reduce to
//! summing increments. Moments are recovered on demand through a Cholesky
//! factorization of `D`.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::features::{FeatureMap, KernelSpec};

/// Precision matrix and information vector of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoState {
    precision: DMatrix<f64>,
    info: DVector<f64>,
    obs_variance: f64,
    prior_variance: f64,
}

/// One batch's additive contribution `(P, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Increment {
    pub p: DMatrix<f64>,
    pub s: DVector<f64>,
}

/// Gaussian predictive distribution of a noisy observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Includes the observation noise.
    pub variance: f64,
}

impl Prediction {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn log_density(&self, y: f64) -> f64 {
        let r = y - self.mean;
        -0.5 * ((2.0 * std::f64::consts::PI * self.variance).ln() + r * r / self.variance)
    }
}

/// `D = I / prior_var`, `eta = 0` in dimension `2J`.
pub fn prior_state(spec: &KernelSpec, num_features: usize) -> Result<InfoState> {
    spec.validate()?;
    if num_features == 0 {
        return Err(Error::invalid("number of features must be at least 1"));
    }
    Ok(InfoState::prior(
        2 * num_features,
        spec.prior_variance,
        spec.obs_variance,
    ))
}

/// Unweighted increment of a batch.
pub fn compute_increment(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    obs_variance: f64,
) -> Result<Increment> {
    build_increment(phi, y, None, obs_variance)
}

/// Shared path for weighted and unweighted increments. Unit weights are
/// multiplications by exactly 1.0, so both paths agree bitwise.
pub(crate) fn build_increment(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&[f64]>,
    obs_variance: f64,
) -> Result<Increment> {
    check_dim("increment targets", phi.ncols(), y.len())?;
    if !(obs_variance.is_finite() && obs_variance > 0.0) {
        return Err(Error::invalid(format!(
            "observation variance must be positive, got {obs_variance}"
        )));
    }
    let mut weighted = phi.clone();
    if let Some(w) = weights {
        check_dim("robust weights", phi.ncols(), w.len())?;
        for (mut col, &wi) in weighted.column_iter_mut().zip(w) {
            col *= wi;
        }
    }
    let inv = obs_variance.recip();
    let mut p = &weighted * phi.transpose();
    p *= inv;
    symmetrize(&mut p);
    let mut s = &weighted * y;
    s *= inv;
    Ok(Increment { p, s })
}

/// `M <- (M + M^T) / 2`.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

impl Increment {
    pub fn zeros(dim: usize) -> Self {
        Increment {
            p: DMatrix::zeros(dim, dim),
            s: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// Flattens `(P, s)` into one vector (column-major `P`, then `s`).
    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(n * n + n);
        out.as_mut_slice()[..n * n].copy_from_slice(self.p.as_slice());
        out.as_mut_slice()[n * n..].copy_from_slice(self.s.as_slice());
        out
    }

    /// Inverse of [`Increment::to_flat`]; `flat` may carry trailing extras.
    pub fn from_flat(flat: &[f64], dim: usize) -> Result<Self> {
        if flat.len() < dim * dim + dim {
            return Err(Error::DimensionMismatch {
                context: "flattened increment",
                expected: dim * dim + dim,
                got: flat.len(),
            });
        }
        let mut p = DMatrix::from_column_slice(dim, dim, &flat[..dim * dim]);
        symmetrize(&mut p);
        Ok(Increment {
            p,
            s: DVector::from_column_slice(&flat[dim * dim..dim * dim + dim]),
        })
    }
}

impl std::ops::AddAssign<&Increment> for Increment {
    fn add_assign(&mut self, rhs: &Increment) {
        self.p += &rhs.p;
        self.s += &rhs.s;
    }
}

impl InfoState {
    pub fn prior(dim: usize, prior_variance: f64, obs_variance: f64) -> Self {
        InfoState {
            precision: DMatrix::identity(dim, dim) * prior_variance.recip(),
            info: DVector::zeros(dim),
            obs_variance,
            prior_variance,
        }
    }

    /// Builds a state from raw parts, checking shapes.
    pub fn from_parts(
        precision: DMatrix<f64>,
        info: DVector<f64>,
        prior_variance: f64,
        obs_variance: f64,
    ) -> Result<Self> {
        check_dim("precision rows", precision.ncols(), precision.nrows())?;
        check_dim("information vector", precision.nrows(), info.len())?;
        if !(prior_variance > 0.0 && obs_variance > 0.0) {
            return Err(Error::invalid("variances must be positive"));
        }
        Ok(InfoState {
            precision,
            info,
            obs_variance,
            prior_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.info.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn info(&self) -> &DVector<f64> {
        &self.info
    }

    pub fn obs_variance(&self) -> f64 {
        self.obs_variance
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut DMatrix<f64>, &mut DVector<f64>) {
        (&mut self.precision, &mut self.info)
    }

    /// `D += P`, `eta += s`.
    pub fn apply_increment(&mut self, inc: &Increment) -> Result<()> {
        check_dim("increment", self.dim(), inc.dim())?;
        check_dim("increment precision", self.dim(), inc.p.nrows())?;
        self.precision += &inc.p;
        self.info += &inc.s;
        Ok(())
    }

    /// Pure variant of [`InfoState::apply_increment`].
    pub fn with_increment(&self, inc: &Increment) -> Result<InfoState> {
        let mut next = self.clone();
        next.apply_increment(inc)?;
        Ok(next)
    }

    pub fn symmetrize(&mut self) {
        symmetrize(&mut self.precision);
    }

    /// Factorizes `D` once for repeated predictions.
    ///
    /// On failure, adds `1e-10 * trace(D) / dim` to the diagonal and retries
    /// once; a second failure reports the first non-positive pivot.
    pub fn factorize(&self) -> Result<Posterior> {
        let chol = match Cholesky::new(self.precision.clone()) {
            Some(c) => c,
            None => {
                let n = self.dim();
                let jitter = 1e-10 * self.precision.trace() / n as f64;
                let mut jittered = self.precision.clone();
                for i in 0..n {
                    jittered[(i, i)] += jitter;
                }
                match Cholesky::new(jittered.clone()) {
                    Some(c) => c,
                    None => {
                        let (index, value) = first_bad_pivot(&jittered);
                        return Err(Error::Degenerate { index, value });
                    }
                }
            }
        };
        let mean = chol.solve(&self.info);
        Ok(Posterior {
            chol,
            mean,
            obs_variance: self.obs_variance,
        })
    }

    /// `(mu, Sigma)` with `Sigma = D^{-1}` symmetrized.
    pub fn posterior_moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let post = self.factorize()?;
        let cov = post.covariance();
        Ok((post.mean, cov))
    }

    pub fn predict(&self, fm: &FeatureMap, x: &[f64]) -> Result<Prediction> {
        check_dim("feature dimension", self.dim(), fm.embedding_dim())?;
        let post = self.factorize()?;
        post.predict_features(&fm.feature_map(x)?)
    }

    /// Predictions at the rows of `x` with one factorization.
    pub fn predict_batch(&self, fm: &FeatureMap, x: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        check_dim("feature dimension", self.dim(), fm.embedding_dim())?;
        let post = self.factorize()?;
        post.predict_matrix(&fm.feature_matrix(x)?)
    }

    /// Writes the versioned binary snapshot.
    ///
    /// Layout, all little-endian:
    /// `b"RFGPINFO"`, `u32` version (1), `u32` dim `n`, `f64` obs variance,
    /// `f64` prior variance, `n*n` `f64` of `D` row-major, `n` `f64` of `eta`.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        let n = self.dim();
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&self.obs_variance.to_le_bytes())?;
        w.write_all(&self.prior_variance.to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                w.write_all(&self.precision[(i, j)].to_le_bytes())?;
            }
        }
        for v in self.info.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<InfoState> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic header".into()));
        }
        let version = read_u32(r)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let n = read_u32(r)? as usize;
        let obs_variance = read_f64(r)?;
        let prior_variance = read_f64(r)?;
        let mut precision = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                precision[(i, j)] = read_f64(r)?;
            }
        }
        let mut info = DVector::zeros(n);
        for v in info.iter_mut() {
            *v = read_f64(r)?;
        }
        InfoState::from_parts(precision, info, prior_variance, obs_variance)
    }
}

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"RFGPINFO";
pub const SNAPSHOT_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Locates the pivot where an unpivoted Cholesky breaks down. Only used to
/// build the error after `nalgebra` has already rejected the matrix.
fn first_bad_pivot(m: &DMatrix<f64>) -> (usize, f64) {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut smallest = (0, f64::INFINITY);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= 0.0 {
            return (j, d);
        }
        if d < smallest.1 {
            smallest = (j, d);
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / dj;
        }
    }
    smallest
}

/// A factorized posterior, ready for repeated predictions.
#[derive(Debug, Clone)]
pub struct Posterior {
    chol: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
    obs_variance: f64,
}

impl Posterior {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `D^{-1}`, symmetrized.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut cov = self.chol.inverse();
        symmetrize(&mut cov);
        cov
    }

    pub fn predict_features(&self, phi: &DVector<f64>) -> Result<Prediction> {
        check_dim("feature vector", self.mean.len(), phi.len())?;
        let mean = phi.dot(&self.mean);
        let half = self
            .chol
            .l_dirty()
            .solve_lower_triangular(phi)
            .ok_or(Error::Degenerate {
                index: 0,
                value: 0.0,
            })?;
        Ok(Prediction {
            mean,
            variance: half.norm_squared() + self.obs_variance,
        })
    }

    /// Predictions for each column of `phi` (`2J x N`).
    pub fn predict_matrix(&self, phi: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        check_dim("feature matrix rows", self.mean.len(), phi.nrows())?;
        let means = phi.transpose() * &self.mean;
        let half = self
            .chol
            .l_dirty()
            .solve_lower_triangular(phi)
            .ok_or(Error::Degenerate {
                index: 0,
                value: 0.0,
            })?;
        Ok(half
            .column_iter()
            .zip(means.iter())
            .map(|(h, &mean)| Prediction {
                mean,
                variance: h.norm_squared() + self.obs_variance,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::sample_frequencies;

    fn spec(prior: f64, obs: f64) -> KernelSpec {
        KernelSpec::new(vec![0.5], None, prior, obs).unwrap()
    }

    #[test]
    fn prior_state_has_scaled_identity_precision() {
        let s = prior_state(&spec(1.0, 0.1), 1).unwrap();
        assert_eq!(s.precision(), &DMatrix::identity(2, 2));
        assert_eq!(s.info(), &DVector::zeros(2));
        let s = prior_state(&spec(25.0, 0.1), 2).unwrap();
        assert_eq!(s.precision(), &(DMatrix::identity(4, 4) * 0.04));
        let (mu, cov) = s.posterior_moments().unwrap();
        assert!(mu.amax() == 0.0);
        assert!((cov - DMatrix::identity(4, 4) * 25.0).amax() < 1e-12);
    }

    #[test]
    fn empty_batch_gives_zero_increment() {
        let inc = compute_increment(&DMatrix::zeros(6, 0), &DVector::zeros(0), 0.5).unwrap();
        assert_eq!(inc, Increment::zeros(6));
    }

    #[test]
    fn single_observation_increment_by_hand() {
        // phi = (0, 1), y = 2, obs_var = 0.5: P = 2 phi phi^T, s = (0, 4).
        let phi = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let inc = compute_increment(&phi, &DVector::from_vec(vec![2.0]), 0.5).unwrap();
        assert_eq!(inc.p, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]));
        assert_eq!(inc.s, DVector::from_vec(vec![0.0, 4.0]));
    }

    #[test]
    fn batch_increment_is_sum_of_single_increments() {
        let phi = DMatrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).sin());
        let y = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let whole = compute_increment(&phi, &y, 0.2).unwrap();
        let mut sum = Increment::zeros(4);
        for j in 0..3 {
            let col = phi.columns(j, 1).into_owned();
            sum += &compute_increment(&col, &DVector::from_vec(vec![y[j]]), 0.2).unwrap();
        }
        assert!((whole.p - sum.p).amax() < 1e-12);
        assert!((whole.s - sum.s).amax() < 1e-12);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let phi = DMatrix::zeros(4, 3);
        assert!(compute_increment(&phi, &DVector::zeros(2), 0.2).is_err());
        assert!(compute_increment(&phi, &DVector::zeros(3), 0.0).is_err());
        let mut s = InfoState::prior(2, 1.0, 1.0);
        assert!(s.apply_increment(&Increment::zeros(4)).is_err());
    }

    #[test]
    fn zero_increment_is_identity_and_order_is_irrelevant() {
        let s = InfoState::prior(4, 2.0, 0.1);
        assert_eq!(s.with_increment(&Increment::zeros(4)).unwrap(), s);
        let a = compute_increment(
            &DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.1),
            &DVector::from_vec(vec![1.0, -1.0]),
            0.1,
        )
        .unwrap();
        let b = compute_increment(
            &DMatrix::from_fn(4, 1, |i, _| 0.3 - i as f64 * 0.2),
            &DVector::from_vec(vec![0.5]),
            0.1,
        )
        .unwrap();
        let ab = s.with_increment(&a).unwrap().with_increment(&b).unwrap();
        let ba = s.with_increment(&b).unwrap().with_increment(&a).unwrap();
        assert!((ab.precision() - ba.precision()).amax() < 1e-14);
        assert!((ab.info() - ba.info()).amax() < 1e-14);
    }

    #[test]
    fn single_feature_posterior_matches_textbook_regression() {
        // J = 1: phi(x) = (sin(vx), cos(vx)). Direct posterior:
        // Sigma = (phi phi^T / s2 + I / p2)^{-1}, mu = Sigma phi y / s2.
        let (p2, s2) = (2.0, 0.3);
        let fm = sample_frequencies(&spec(p2, s2), 1, 1, 4).unwrap();
        let x = 0.7;
        let y = 1.4;
        let v = fm.frequencies()[(0, 0)];
        let (a, b) = ((v * x).sin(), (v * x).cos());
        // 2x2 inverse by hand.
        let (m11, m12, m22) = (a * a / s2 + 1.0 / p2, a * b / s2, b * b / s2 + 1.0 / p2);
        let det = m11 * m22 - m12 * m12;
        let (c11, c12, c22) = (m22 / det, -m12 / det, m11 / det);
        let mu = [(c11 * a + c12 * b) * y / s2, (c12 * a + c22 * b) * y / s2];

        let mut state = prior_state(&spec(p2, s2), 1).unwrap();
        let phi = fm.feature_matrix(&DMatrix::from_element(1, 1, x)).unwrap();
        state
            .apply_increment(&compute_increment(&phi, &DVector::from_element(1, y), s2).unwrap())
            .unwrap();
        let (m, cov) = state.posterior_moments().unwrap();
        assert!((m[0] - mu[0]).abs() < 1e-12 && (m[1] - mu[1]).abs() < 1e-12);
        assert!((cov[(0, 0)] - c11).abs() < 1e-12);
        assert!((cov[(0, 1)] - c12).abs() < 1e-12);
        assert!((cov[(1, 1)] - c22).abs() < 1e-12);

        let xs = 0.1;
        let (sa, sb) = ((v * xs).sin(), (v * xs).cos());
        let pred = state.predict(&fm, &[xs]).unwrap();
        let mean = sa * mu[0] + sb * mu[1];
        let var = sa * sa * c11 + 2.0 * sa * sb * c12 + sb * sb * c22 + s2;
        assert!((pred.mean - mean).abs() < 1e-12);
        assert!((pred.variance - var).abs() < 1e-12);
    }

    #[test]
    fn prior_prediction_and_noise_floor() {
        let sp = KernelSpec::new(vec![0.3, 0.3], None, 3.0, 0.2).unwrap();
        let fm = sample_frequencies(&sp, 20, 2, 1).unwrap();
        let mut state = prior_state(&sp, 20).unwrap();
        let p = state.predict(&fm, &[0.4, 0.1]).unwrap();
        assert_eq!(p.mean, 0.0);
        assert!((p.variance - 3.2).abs() < 1e-12);

        let x = DMatrix::from_row_slice(1, 2, &[0.4, 0.1]);
        let phi = fm.feature_matrix(&x).unwrap();
        let mut prev = p.variance;
        for _ in 0..200 {
            state
                .apply_increment(
                    &compute_increment(&phi, &DVector::from_element(1, 1.0), 0.2).unwrap(),
                )
                .unwrap();
            let v = state.predict(&fm, &[0.4, 0.1]).unwrap().variance;
            assert!(v <= prev + 1e-12 && v >= 0.2);
            prev = v;
        }
        assert!(prev - 0.2 < 1e-2);
    }

    #[test]
    fn mean_solves_defining_equation_and_batch_matches_moments() {
        let sp = KernelSpec::new(vec![0.3, 0.6], None, 1.5, 0.05).unwrap();
        let fm = sample_frequencies(&sp, 15, 2, 2).unwrap();
        let x = DMatrix::from_fn(25, 2, |i, c| ((i * 7 + c * 3) % 11) as f64 / 11.0);
        let y = DVector::from_fn(25, |i, _| (i as f64 * 0.4).sin());
        let mut state = prior_state(&sp, 15).unwrap();
        state
            .apply_increment(&compute_increment(&fm.feature_matrix(&x).unwrap(), &y, 0.05).unwrap())
            .unwrap();
        let (mu, cov) = state.posterior_moments().unwrap();
        let resid = state.precision() * &mu - state.info();
        assert!(resid.norm() <= 1e-10 * state.info().norm());

        let test = DMatrix::from_fn(9, 2, |i, c| 0.1 * i as f64 + 0.05 * c as f64);
        let batch = state.predict_batch(&fm, &test).unwrap();
        for (i, p) in batch.iter().enumerate() {
            let phi = fm.feature_map(&[test[(i, 0)], test[(i, 1)]]).unwrap();
            let mean = phi.dot(&mu);
            let var = (phi.transpose() * &cov * &phi)[(0, 0)] + 0.05;
            assert!((p.mean - mean).abs() < 1e-10);
            assert!((p.variance - var).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_precision_reports_pivot() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let s = InfoState::from_parts(d, DVector::zeros(2), 1.0, 1.0).unwrap();
        match s.factorize() {
            Err(Error::Degenerate { index, value }) => {
                assert_eq!(index, 1);
                assert!(value < 0.0);
            }
            other => panic!("expected degeneracy error, got {other:?}"),
        }
    }

    #[test]
    fn jitter_rescues_singular_precision() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = InfoState::from_parts(d, DVector::zeros(2), 1.0, 1.0).unwrap();
        assert!(s.factorize().is_ok());
    }

    #[test]
    fn snapshot_round_trip_and_bad_magic() {
        let mut s = InfoState::prior(3, 2.0, 0.5);
        s.parts_mut().0[(0, 2)] = 0.25;
        s.parts_mut().0[(2, 0)] = 0.25;
        s.parts_mut().1[1] = -1.5;
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + 16 + 9 * 8 + 3 * 8);
        assert_eq!(&buf[..8], b"RFGPINFO");
        let back = InfoState::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
        buf[0] = b'X';
        assert!(matches!(
            InfoState::read_snapshot(&mut buf.as_slice()),
            Err(Error::Snapshot(_))
        ));
    }

    #[test]
    fn flat_round_trip() {
        let inc = compute_increment(
            &DMatrix::from_fn(4, 2, |i, j| (i as f64) - j as f64),
            &DVector::from_vec(vec![1.0, 2.0]),
            0.5,
        )
        .unwrap();
        let flat = inc.to_flat();
        assert_eq!(Increment::from_flat(flat.as_slice(), 4).unwrap(), inc);
        assert!(Increment::from_flat(&flat.as_slice()[..5], 4).is_err());
    }

    #[test]
    fn log_density_of_standard_normal_at_mode() {
        let p = Prediction {
            mean: 0.0,
            variance: 1.0,
        };
        assert!((-p.log_density(0.0) - 0.918_938_533_204_672_7).abs() < 1e-15);
    }
}
