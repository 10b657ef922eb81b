//! Random Fourier features for ARD RBF kernels.
//!
//! An RBF kernel `k(x, x') = exp(-sum_c (x_c - x'_c)^2 / (2 l_c^2))` has a
//! Gaussian spectral density `N(0, diag(1/l_c^2))`. Drawing `J` frequencies
//! `v_j` from it gives the embedding
//!
//! ```text
//! phi(x) = J^{-1/2} [sin(x.v_1), cos(x.v_1), ..., sin(x.v_J), cos(x.v_J)]
//! ```
//!
//! with `phi(x).phi(x')` an unbiased estimate of `k(x, x')`. When a temporal
//! lengthscale is present the inputs carry time as their last coordinate and
//! the extra frequency column is drawn independently, which realizes the
//! product kernel `k_s(x, x') * k_t(t, t')`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::keyed_rng;

/// Hyperparameters of one RF-GP model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// ARD lengthscales, one per spatial input dimension.
    pub spatial_lengthscales: Vec<f64>,
    /// Lengthscale of the time coordinate; `None` for static kernels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_lengthscale: Option<f64>,
    /// Prior variance of every feature weight.
    pub prior_variance: f64,
    /// Observation noise variance.
    pub obs_variance: f64,
}

impl KernelSpec {
    pub fn new(
        spatial_lengthscales: Vec<f64>,
        temporal_lengthscale: Option<f64>,
        prior_variance: f64,
        obs_variance: f64,
    ) -> Result<Self> {
        let spec = KernelSpec {
            spatial_lengthscales,
            temporal_lengthscale,
            prior_variance,
            obs_variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spatial_lengthscales.is_empty() {
            return Err(Error::invalid(
                "at least one spatial lengthscale is required",
            ));
        }
        let all = self
            .spatial_lengthscales
            .iter()
            .chain(self.temporal_lengthscale.iter());
        for &l in all {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!(
                    "lengthscale must be positive, got {l}"
                )));
            }
        }
        if !(self.prior_variance.is_finite() && self.prior_variance > 0.0) {
            return Err(Error::invalid(format!(
                "prior variance must be positive, got {}",
                self.prior_variance
            )));
        }
        if !(self.obs_variance.is_finite() && self.obs_variance > 0.0) {
            return Err(Error::invalid(format!(
                "observation variance must be positive, got {}",
                self.obs_variance
            )));
        }
        Ok(())
    }

    /// Number of spatial dimensions `d`.
    pub fn spatial_dim(&self) -> usize {
        self.spatial_lengthscales.len()
    }

    /// Length of the feature-map input: `d`, or `d + 1` with a time column.
    pub fn input_dim(&self) -> usize {
        self.spatial_dim() + usize::from(self.temporal_lengthscale.is_some())
    }

    /// Closed-form kernel value, used as the reference the features approximate.
    pub fn rbf(&self, x: &[f64], y: &[f64]) -> f64 {
        let scales = self
            .spatial_lengthscales
            .iter()
            .chain(self.temporal_lengthscale.iter());
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(scales)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        (-0.5 * r2).exp()
    }
}

/// Sampled spectral frequencies, `J` rows by input-dimension columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    frequencies: DMatrix<f64>,
    seed: u64,
}

/// Draws `J` frequencies for `spec` with `d` spatial dimensions.
pub fn sample_frequencies(
    spec: &KernelSpec,
    num_features: usize,
    d: usize,
    seed: u64,
) -> Result<FeatureMap> {
    sample_frequencies_for_member(spec, num_features, d, seed, 0)
}

/// Like [`sample_frequencies`], drawing from the independent random stream
/// `member`. Every agent holding the same `(seed, member)` gets the same basis.
pub fn sample_frequencies_for_member(
    spec: &KernelSpec,
    num_features: usize,
    d: usize,
    seed: u64,
    member: u64,
) -> Result<FeatureMap> {
    if num_features == 0 {
        return Err(Error::invalid("number of features must be at least 1"));
    }
    if d == 0 {
        return Err(Error::invalid("input dimension must be at least 1"));
    }
    spec.validate()?;
    check_dim("spatial lengthscales", d, spec.spatial_dim())?;

    let inv_scales: Vec<f64> = spec
        .spatial_lengthscales
        .iter()
        .chain(spec.temporal_lengthscale.iter())
        .map(|l| l.recip())
        .collect();
    let cols = inv_scales.len();
    let mut rng = keyed_rng(seed, member);
    // Row-major draw order so that a row is one frequency vector.
    let mut data = Vec::with_capacity(num_features * cols);
    for _ in 0..num_features {
        for s in &inv_scales {
            let z: f64 = rng.sample(StandardNormal);
            data.push(z * s);
        }
    }
    Ok(FeatureMap {
        frequencies: DMatrix::from_row_slice(num_features, cols, &data),
        seed,
    })
}

impl FeatureMap {
    /// Wraps an explicit frequency matrix (`J x p`).
    pub fn from_frequencies(frequencies: DMatrix<f64>, seed: u64) -> Result<Self> {
        if frequencies.nrows() == 0 || frequencies.ncols() == 0 {
            return Err(Error::invalid("frequency matrix must be non-empty"));
        }
        Ok(FeatureMap { frequencies, seed })
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn num_features(&self) -> usize {
        self.frequencies.nrows()
    }

    /// Length `2J` of the embedding.
    pub fn embedding_dim(&self) -> usize {
        2 * self.num_features()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `phi(x)` with sin/cos interleaved per frequency.
    pub fn feature_map(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim("feature map input", self.input_dim(), x.len())?;
        let j = self.num_features();
        let scale = (j as f64).sqrt().recip();
        let mut phi = DVector::zeros(2 * j);
        for (row, freq) in self.frequencies.row_iter().enumerate() {
            let arg: f64 = freq.iter().zip(x).map(|(v, xi)| v * xi).sum();
            let (s, c) = arg.sin_cos();
            phi[2 * row] = scale * s;
            phi[2 * row + 1] = scale * c;
        }
        Ok(phi)
    }

    /// `Phi`, with column `i` equal to `phi(X[i, :])`. `X` is `N x p`.
    pub fn feature_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("feature matrix input columns", self.input_dim(), x.ncols())?;
        let n = x.nrows();
        let mut phi = DMatrix::zeros(self.embedding_dim(), n);
        let mut row = vec![0.0; x.ncols()];
        for i in 0..n {
            for (c, r) in row.iter_mut().enumerate() {
                *r = x[(i, c)];
            }
            phi.set_column(i, &self.feature_map(&row)?);
        }
        Ok(phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(ls: Vec<f64>, lt: Option<f64>) -> KernelSpec {
        KernelSpec::new(ls, lt, 1.0, 0.1).unwrap()
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let s = spec(vec![1.0], None);
        let a = sample_frequencies(&s, 3, 1, 42).unwrap();
        let b = sample_frequencies(&s, 3, 1, 42).unwrap();
        assert_eq!(a.frequencies().shape(), (3, 1));
        assert_eq!(a, b);
        let c = sample_frequencies(&s, 3, 1, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn members_draw_independent_streams() {
        let s = spec(vec![1.0], None);
        let a = sample_frequencies_for_member(&s, 4, 1, 7, 0).unwrap();
        let b = sample_frequencies_for_member(&s, 4, 1, 7, 1).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, sample_frequencies(&s, 4, 1, 7).unwrap());
    }

    #[test]
    fn frequency_variance_matches_spectral_density() {
        // RBF with l = 0.1 has spectral variance 1 / l^2 = 100.
        let s = spec(vec![0.1], None);
        let fm = sample_frequencies(&s, 10_000, 1, 5).unwrap();
        let col = fm.frequencies().column(0);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 100.0).abs() <= 5.0, "variance {var}");
    }

    #[test]
    fn temporal_column_is_scaled_unit_draw() {
        let st = spec(vec![1.0, 1.0], Some(4.0));
        let unit = spec(vec![1.0, 1.0], Some(1.0));
        let a = sample_frequencies(&st, 5, 2, 0).unwrap();
        let b = sample_frequencies(&unit, 5, 2, 0).unwrap();
        assert_eq!(a.frequencies().shape(), (5, 3));
        for r in 0..5 {
            assert_eq!(a.frequencies()[(r, 0)], b.frequencies()[(r, 0)]);
            assert_eq!(a.frequencies()[(r, 1)], b.frequencies()[(r, 1)]);
            assert_eq!(a.frequencies()[(r, 2)], b.frequencies()[(r, 2)] / 4.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = spec(vec![1.0], None);
        assert!(sample_frequencies(&s, 0, 1, 0).is_err());
        assert!(sample_frequencies(&s, 3, 0, 0).is_err());
        assert!(sample_frequencies(&s, 3, 2, 0).is_err());
        assert!(KernelSpec::new(vec![0.0], None, 1.0, 1.0).is_err());
        assert!(KernelSpec::new(vec![1.0], Some(-1.0), 1.0, 1.0).is_err());
        assert!(KernelSpec::new(vec![1.0], None, 0.0, 1.0).is_err());
        assert!(KernelSpec::new(vec![1.0], None, 1.0, 0.0).is_err());
        let fm = sample_frequencies(&s, 3, 1, 0).unwrap();
        assert!(matches!(
            fm.feature_map(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(fm.feature_matrix(&DMatrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn origin_maps_to_alternating_pattern() {
        let fm = sample_frequencies(&spec(vec![0.5, 2.0], None), 4, 2, 1).unwrap();
        let phi = fm.feature_map(&[0.0, 0.0]).unwrap();
        for j in 0..4 {
            assert_eq!(phi[2 * j], 0.0);
            assert_eq!(phi[2 * j + 1], 0.5);
        }
    }

    #[test]
    fn feature_matrix_columns_match_feature_map() {
        let fm = sample_frequencies(&spec(vec![0.3, 0.7], None), 5, 2, 9).unwrap();
        let x = DMatrix::from_fn(7, 2, |i, c| 0.1 * i as f64 - 0.2 * c as f64);
        let phi = fm.feature_matrix(&x).unwrap();
        assert_eq!(phi.shape(), (10, 7));
        for i in 0..7 {
            let col = fm.feature_map(&[x[(i, 0)], x[(i, 1)]]).unwrap();
            assert_eq!(phi.column(i), col.column(0));
        }
        let dup = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.4, 0.1]);
        let phi = fm.feature_matrix(&dup).unwrap();
        assert_eq!(phi.column(0), phi.column(1));
    }

    #[test]
    fn kernel_estimate_is_close_in_one_dimension() {
        let s = spec(vec![1.0], None);
        let j = 2000;
        let fm = sample_frequencies(&s, j, 1, 11).unwrap();
        let mut rng = keyed_rng(99, 0);
        let mut err = 0.0;
        for _ in 0..100 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(-3.0..3.0);
            let approx = fm
                .feature_map(&[a])
                .unwrap()
                .dot(&fm.feature_map(&[b]).unwrap());
            err += (approx - (-(a - b).powi(2) / 2.0).exp()).abs();
        }
        assert!(err / 100.0 <= 3.0 / (j as f64).sqrt());
    }

    #[test]
    fn kernel_estimate_is_unbiased_across_seeds() {
        let s = spec(vec![0.5, 0.8], None);
        let (x, y) = ([0.1, -0.3], [0.4, 0.2]);
        let exact = s.rbf(&x, &y);
        let draws: Vec<f64> = (0..50)
            .map(|seed| {
                let fm = sample_frequencies(&s, 64, 2, seed).unwrap();
                fm.feature_map(&x)
                    .unwrap()
                    .dot(&fm.feature_map(&y).unwrap())
            })
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * sd / n.sqrt(),
            "mean {mean} exact {exact}"
        );
    }

    #[test]
    fn spatiotemporal_map_factorizes_over_scaled_inputs() {
        // With unit lengthscales the frequencies are the raw standard normals;
        // scaling the input by 1/l reproduces the lengthscaled map.
        let st = spec(vec![0.2, 0.5], Some(4.0));
        let unit = spec(vec![1.0, 1.0], Some(1.0));
        let a = sample_frequencies(&st, 16, 2, 3).unwrap();
        let b = sample_frequencies(&unit, 16, 2, 3).unwrap();
        let x = [0.3, 0.9, 46.0];
        let scaled = [0.3 / 0.2, 0.9 / 0.5, 46.0 / 4.0];
        let pa = a.feature_map(&x).unwrap();
        let pb = b.feature_map(&scaled).unwrap();
        assert!((pa - pb).amax() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn embedding_has_unit_norm(
                x in proptest::collection::vec(-50.0f64..50.0, 3),
                seed in 0u64..1000,
                j in 1usize..64,
            ) {
                let s = spec(vec![0.1, 1.0], Some(4.0));
                let fm = sample_frequencies(&s, j, 2, seed).unwrap();
                let phi = fm.feature_map(&x).unwrap();
                prop_assert!((phi.norm_squared() - 1.0).abs() < 1e-12);
            }
        }
    }
}
