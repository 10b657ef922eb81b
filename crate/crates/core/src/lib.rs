//! Decentralized Gaussian process regression with random Fourier features.
//!
//! Every model is a Bayesian linear model over a shared random Fourier
//! feature basis, stored in information form `(D, eta)`. Because
//! conditionally independent evidence is additive in that form, the same
//! code serves online updates, fusion-center pooling, and network-wide
//! average consensus between agents that only talk to their neighbours.
//!
//! Modules:
//!
//! - [`features`]: spectral sampling for ARD RBF kernels and the feature map.
//! - [`info_filter`]: information-form posterior, increments, predictions.
//! - [`robust`]: Huber/Hampel weights and weighted increments.
//! - [`dynamics`]: back-to-prior and uncertainty-injection forgetting.
//! - [`consensus`]: topologies, Metropolis weights, synchronous consensus.
//! - [`ensemble`]: per-agent mixtures of models with prequential weights.
//! - [`harness`]: data streams, outlier injection, the simulator and metrics.

pub mod consensus;
pub mod dynamics;
pub mod ensemble;
mod error;
pub mod features;
pub mod harness;
pub mod info_filter;
pub(crate) mod rng;
pub mod robust;

pub use error::{Error, Result};
