//! Temporal adaptation of information states.
//!
//! Two routes handle time-varying targets. Forgetting discounts old
//! evidence once per epoch before new data arrive:
//!
//! - back-to-prior (B2P): `D <- nu D + (1 - nu) I / prior_var`, `eta <- nu eta`
//! - uncertainty injection (UI): `D <- nu D`, `eta <- nu eta`
//!
//! Alternatively the model stays static and time is appended to the inputs,
//! learning `f(x, t)` with a product spatiotemporal kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info_filter::InfoState;

/// Below this, UI forgetting would leave a numerically useless precision.
pub const MIN_UI_NU: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsMode {
    #[default]
    Static,
    B2p,
    Ui,
    Spatiotemporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default)]
    pub mode: DynamicsMode,
    /// Forgetting coefficient; ignored by `static` and `spatiotemporal`.
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn default_nu() -> f64 {
    1.0
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            mode: DynamicsMode::Static,
            nu: 1.0,
        }
    }
}

impl DynamicsConfig {
    pub fn new(mode: DynamicsMode, nu: f64) -> Result<Self> {
        let cfg = DynamicsConfig { mode, nu };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.mode {
            DynamicsMode::Static | DynamicsMode::Spatiotemporal => true,
            DynamicsMode::B2p => (0.0..=1.0).contains(&self.nu),
            DynamicsMode::Ui => self.nu >= MIN_UI_NU && self.nu <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "forgetting coefficient {} is out of range for {:?}",
                self.nu, self.mode
            )))
        }
    }

    /// True when the model inputs carry a time column.
    pub fn uses_time_input(&self) -> bool {
        self.mode == DynamicsMode::Spatiotemporal
    }
}

/// Applies one epoch of forgetting in place.
pub fn apply_forgetting(state: &mut InfoState, cfg: &DynamicsConfig) -> Result<()> {
    cfg.validate()?;
    let nu = cfg.nu;
    let mode = cfg.mode;
    if matches!(mode, DynamicsMode::Static | DynamicsMode::Spatiotemporal) || nu == 1.0 {
        return Ok(());
    }
    let prior_precision = state.prior_variance().recip();
    let (d, eta) = state.parts_mut();
    *d *= nu;
    *eta *= nu;
    if mode == DynamicsMode::B2p {
        let reinjected = (1.0 - nu) * prior_precision;
        for i in 0..d.nrows() {
            d[(i, i)] += reinjected;
        }
    }
    state.symmetrize();
    Ok(())
}

/// `[x, t]`; time is left unnormalized.
pub fn augment_time(x: &[f64], t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.extend_from_slice(x);
    out.push(t);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{sample_frequencies, KernelSpec};
    use crate::info_filter::{compute_increment, prior_state};
    use crate::rng::keyed_rng;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn trained() -> InfoState {
        let spec = KernelSpec::new(vec![0.4], None, 2.0, 0.1).unwrap();
        let fm = sample_frequencies(&spec, 6, 1, 0).unwrap();
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64 * 0.1);
        let y = DVector::from_fn(10, |i, _| (i as f64).cos());
        let mut s = prior_state(&spec, 6).unwrap();
        s.apply_increment(&compute_increment(&fm.feature_matrix(&x).unwrap(), &y, 0.1).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn unit_nu_is_identity() {
        for mode in [DynamicsMode::B2p, DynamicsMode::Ui, DynamicsMode::Static] {
            let mut s = trained();
            apply_forgetting(&mut s, &DynamicsConfig::new(mode, 1.0).unwrap()).unwrap();
            assert_eq!(s, trained());
        }
    }

    #[test]
    fn static_modes_ignore_nu() {
        let mut s = trained();
        let cfg = DynamicsConfig {
            mode: DynamicsMode::Spatiotemporal,
            nu: 0.3,
        };
        apply_forgetting(&mut s, &cfg).unwrap();
        assert_eq!(s, trained());
    }

    #[test]
    fn b2p_with_zero_nu_resets_to_prior() {
        let mut s = trained();
        apply_forgetting(
            &mut s,
            &DynamicsConfig::new(DynamicsMode::B2p, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(s, InfoState::prior(12, 2.0, 0.1));
    }

    #[test]
    fn ui_preserves_mean_and_inflates_covariance() {
        let s = trained();
        let mut f = s.clone();
        let nu = 0.7;
        apply_forgetting(&mut f, &DynamicsConfig::new(DynamicsMode::Ui, nu).unwrap()).unwrap();
        let (mu0, cov0) = s.posterior_moments().unwrap();
        let (mu1, cov1) = f.posterior_moments().unwrap();
        assert!((mu0 - mu1).amax() < 1e-10);
        assert!((cov0 / nu - cov1).amax() < 1e-9);
    }

    #[test]
    fn b2p_contracts_geometrically_to_prior() {
        let prior = InfoState::prior(12, 2.0, 0.1);
        let mut s = trained();
        let nu = 0.8;
        let cfg = DynamicsConfig::new(DynamicsMode::B2p, nu).unwrap();
        let mut prev = (s.precision() - prior.precision()).norm();
        for _ in 0..30 {
            apply_forgetting(&mut s, &cfg).unwrap();
            let dist = (s.precision() - prior.precision()).norm();
            assert!((dist - nu * prev).abs() <= 1e-9 * prev.max(1.0));
            prev = dist;
        }
        assert!(s.factorize().is_ok());
    }

    #[test]
    fn invalid_nu_is_rejected() {
        assert!(DynamicsConfig::new(DynamicsMode::Ui, 1e-7).is_err());
        assert!(DynamicsConfig::new(DynamicsMode::Ui, 0.0).is_err());
        assert!(DynamicsConfig::new(DynamicsMode::B2p, 1.5).is_err());
        assert!(DynamicsConfig::new(DynamicsMode::B2p, -0.1).is_err());
        assert!(DynamicsConfig::new(DynamicsMode::Ui, 1e-6).is_ok());
    }

    #[test]
    fn time_augmentation() {
        assert_eq!(augment_time(&[0.2, 0.7], 46.0), vec![0.2, 0.7, 46.0]);
        assert_eq!(augment_time(&[], 3.0), vec![3.0]);
    }

    #[test]
    fn augmented_features_approximate_product_kernel() {
        let spec = KernelSpec::new(vec![0.5], Some(4.0), 1.0, 0.1).unwrap();
        let j = 2000;
        let fm = sample_frequencies(&spec, j, 1, 21).unwrap();
        let mut rng = keyed_rng(5, 0);
        let mut err = 0.0;
        for _ in 0..100 {
            let (x1, x2): (f64, f64) = (rng.random(), rng.random());
            let (t1, t2): (f64, f64) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            let a = fm.feature_map(&augment_time(&[x1], t1)).unwrap();
            let b = fm.feature_map(&augment_time(&[x2], t2)).unwrap();
            let ks = (-(x1 - x2).powi(2) / (2.0 * 0.25)).exp();
            let kt = (-(t1 - t2).powi(2) / (2.0 * 16.0)).exp();
            err += (a.dot(&b) - ks * kt).abs();
        }
        assert!(err / 100.0 <= 3.0 / (j as f64).sqrt());
    }
}
