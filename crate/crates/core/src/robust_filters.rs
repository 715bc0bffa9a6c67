//! Variational Student's-t Kalman filter (TKF) and its covariance-adaptive
//! variant (TGKF).
//!
//! One time step runs the usual prediction, then a fixed number of
//! fixed-point iterations that jointly re-estimate the prediction scale matrix
//! (inverse-Wishart), the prediction mixing variable `ξ` and the measurement
//! mixing variable `λ` (both Gamma). The only difference between TKF and TGKF
//! is the measurement covariance handed to the iterations: TKF uses the
//! nominal covariance of the noise, TGKF the mixture-derived `TG · cov_s`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, spd_inverse, symmetrize};
use crate::linear_gaussian::{kf_predict, shape, GaussianBelief, StateSpaceModel};
use crate::mixture_estimation::{effective_covariance, NoiseMixtureEstimate};

/// Constants of the variational iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TkfConfig {
    /// Degrees of freedom of the predicted-state distribution.
    pub omega: f64,
    /// Degrees of freedom of the likelihood.
    pub nu: f64,
    /// Tuning parameter of the inverse-Wishart prior.
    pub tau: f64,
    /// Fixed-point iterations per time step.
    pub n_iters: usize,
}

impl Default for TkfConfig {
    fn default() -> Self {
        Self {
            omega: 5.0,
            nu: 5.0,
            tau: 5.0,
            n_iters: 10,
        }
    }
}

impl TkfConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega", self.omega), ("nu", self.nu), ("tau", self.tau)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        if self.n_iters < 1 {
            return Err(Error::invalid("n_iters", "must be at least 1"));
        }
        Ok(())
    }

    /// Supremum `(m + ν)/ν` of the measurement mixing expectation.
    pub fn adjustment_limit(&self, meas_dim: usize) -> f64 {
        (meas_dim as f64 + self.nu) / self.nu
    }
}

/// Quantities produced by one fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalIterate {
    pub iteration: usize,
    pub x_post: DVector<f64>,
    pub p_post: DMatrix<f64>,
    /// E[Σ⁻¹], the expected inverse prediction scale matrix.
    pub e_sigma_inv: DMatrix<f64>,
    pub e_xi: f64,
    pub e_lambda: f64,
    pub u_hat: f64,
    pub u_mat: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Measurement covariance rescaled by E[λ].
    pub r_tilde: DMatrix<f64>,
    /// Prediction covariance rebuilt from E[Σ⁻¹] and E[ξ].
    pub p_tilde: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// Max absolute change of the posterior mean against the previous iterate.
    pub mean_change: f64,
}

/// E[λ] = (m + ν) / (ν + tr(E · R⁻¹)).
pub fn lambda_expectation(
    residual_outer: &DMatrix<f64>,
    r_effective: &DMatrix<f64>,
    config: &TkfConfig,
) -> Result<f64> {
    let m = r_effective.nrows();
    if !linalg::is_square(residual_outer, m) || !linalg::is_square(r_effective, m) {
        return Err(Error::dims(
            "lambda_expectation",
            format!("{m}x{m}"),
            shape(residual_outer),
        ));
    }
    let r_inv = spd_inverse(r_effective, "r_effective")?;
    Ok(lambda_with_inverse(residual_outer, &r_inv, config.nu).0)
}

/// Returns (E[λ], γ, δ).
fn lambda_with_inverse(
    residual_outer: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    nu: f64,
) -> (f64, f64, f64) {
    let m = r_inv.nrows() as f64;
    let gamma = 0.5 * (m + nu);
    let delta = 0.5 * (nu + (residual_outer * r_inv).trace());
    (gamma / delta, gamma, delta)
}

fn check_finite(
    quantity: &'static str,
    iteration: usize,
    values: impl IntoIterator<Item = f64>,
) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::Divergence {
            quantity,
            iteration,
        })
    }
}

/// One TKF time step with the given measurement covariance.
pub fn tkf_step(
    model: &StateSpaceModel,
    posterior_prev: &GaussianBelief,
    z: &DVector<f64>,
    r_effective: &DMatrix<f64>,
    config: &TkfConfig,
) -> Result<GaussianBelief> {
    tkf_step_traced(model, posterior_prev, z, r_effective, config).map(|(b, _)| b)
}

/// [`tkf_step`] that also returns every fixed-point iterate.
pub fn tkf_step_traced(
    model: &StateSpaceModel,
    posterior_prev: &GaussianBelief,
    z: &DVector<f64>,
    r_effective: &DMatrix<f64>,
    config: &TkfConfig,
) -> Result<(GaussianBelief, Vec<VariationalIterate>)> {
    config.validate()?;
    let n = model.state_dim();
    let m = model.meas_dim();
    posterior_prev.check_dim(n, "tkf_step posterior")?;
    if z.len() != m {
        return Err(Error::dims("measurement", m, z.len()));
    }
    if !linalg::is_square(r_effective, m) {
        return Err(Error::dims(
            "r_effective",
            format!("{m}x{m}"),
            shape(r_effective),
        ));
    }
    if !linalg::is_positive_definite(r_effective) {
        return Err(Error::ContractViolation(
            "r_effective must be symmetric positive definite".into(),
        ));
    }

    // time update
    let prior = kf_predict(model, posterior_prev)?;
    let x_pred = &prior.mean;
    let p_pred = &prior.cov;

    // initialization
    let nf = n as f64;
    let u = nf + config.tau + 1.0;
    let u_prior = p_pred * config.tau;
    let mut e_sigma_inv = spd_inverse(&u_prior, "prior scale matrix")? * (u - nf - 1.0);
    let r_inv = spd_inverse(r_effective, "r_effective")?;
    let h = &model.h;
    let ht = h.transpose();
    let innovation = z - h * x_pred;

    let mut x_post = x_pred.clone();
    let mut p_post = p_pred.clone();
    let mut iterates = Vec::with_capacity(config.n_iters);

    for i in 0..config.n_iters {
        let dx = &x_post - x_pred;
        let d = &p_post + &dx * dx.transpose();

        let alpha = 0.5 * (nf + config.omega);
        let beta = 0.5 * (config.omega + (&d * &e_sigma_inv).trace());
        let e_xi = alpha / beta;

        let resid = z - h * &x_post;
        let e_mat = &resid * resid.transpose() + h * &p_post * &ht;
        let (e_lambda, gamma, delta) = lambda_with_inverse(&e_mat, &r_inv, config.nu);
        if !(e_xi > 0.0 && e_lambda > 0.0) {
            return Err(Error::Divergence {
                quantity: "E[xi]/E[lambda]",
                iteration: i,
            });
        }
        check_finite("E[xi]/E[lambda]", i, [e_xi, e_lambda])?;

        let u_hat = u + 1.0;
        let u_mat = symmetrize(&(&u_prior + &d * e_xi));
        e_sigma_inv = spd_inverse(&u_mat, "posterior scale matrix")? * (u_hat - nf - 1.0);

        let r_tilde = r_effective / e_lambda;
        let p_tilde = spd_inverse(&e_sigma_inv, "E[Sigma^-1]")? / e_xi;

        let pht = &p_tilde * &ht;
        let s = symmetrize(&(h * &pht + &r_tilde));
        let gain = pht * spd_inverse(&s, "innovation covariance")?;

        let x_next = x_pred + &gain * &innovation;
        let p_next = symmetrize(&(&p_tilde - &gain * h * &p_tilde));
        check_finite("posterior", i, x_next.iter().chain(p_next.iter()).copied())?;

        let mean_change = (&x_next - &x_post).amax();
        x_post = x_next;
        p_post = p_next;
        iterates.push(VariationalIterate {
            iteration: i,
            x_post: x_post.clone(),
            p_post: p_post.clone(),
            e_sigma_inv: e_sigma_inv.clone(),
            e_xi,
            e_lambda,
            u_hat,
            u_mat,
            alpha,
            beta,
            gamma,
            delta,
            r_tilde,
            p_tilde,
            gain,
            mean_change,
        });
    }

    Ok((
        GaussianBelief {
            mean: x_post,
            cov: p_post,
        },
        iterates,
    ))
}

/// One TGKF time step: TKF driven by the mixture's effective covariance.
pub fn tgkf_step(
    model: &StateSpaceModel,
    posterior_prev: &GaussianBelief,
    z: &DVector<f64>,
    mixture: &NoiseMixtureEstimate,
    config: &TkfConfig,
) -> Result<GaussianBelief> {
    let r_effective = effective_covariance(mixture)?;
    tkf_step(model, posterior_prev, z, &r_effective, config)
}
