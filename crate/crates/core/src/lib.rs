//! Robust linear state estimation under heavy-tailed measurement noise.
//!
//! - [`linear_gaussian`]: state-space models, the Kalman filter and its
//!   information-weight form.
//! - [`mixture_estimation`]: two-component Gaussian mixture fit of noise
//!   samples and the TG adjustment factor.
//! - [`robust_filters`]: the variational Student's-t Kalman filter (TKF) and
//!   the covariance-adaptive variant (TGKF).
//! - [`noise_lab`]: seeded mixture, Gaussian and alpha-stable noise.
//! - [`tracking_bench`]: constant-velocity Monte Carlo benchmark.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod linear_gaussian;
pub mod mixture_estimation;
pub mod noise_lab;
pub mod robust_filters;
pub mod tracking_bench;

pub use error::{Error, Result};
pub use linear_gaussian::{
    combine_weighted, information_weights, kf_predict, kf_update, kf_update_with_r, GaussianBelief,
    StateSpaceModel, WeightPair,
};
pub use mixture_estimation::{
    effective_covariance, fit_gmm2, gmm_pdf, tg_factor, EmSettings, NoiseMixtureEstimate,
};
pub use robust_filters::{lambda_expectation, tgkf_step, tkf_step, TkfConfig, VariationalIterate};

/// Crate version, recorded in emitted result metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
