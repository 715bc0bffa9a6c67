//! Linear state-space models and the classical Kalman filter.
//!
//! Besides the usual covariance-form predict/update pair this module exposes
//! the information-weight form of the update, in which the posterior mean is
//! written as `a_p * prior + a_r * z`. The two weight matrices show how much
//! confidence the filter places on the prediction versus the measurement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, spd_inverse, symmetrize};

/// Linear model `x_k = f x_{k-1} + control + w`, `z_k = h x_k + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r_nominal: DMatrix<f64>,
    /// Known additive offset applied in every prediction.
    pub control: Option<DVector<f64>>,
}

impl StateSpaceModel {
    pub fn new(
        f: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        r_nominal: DMatrix<f64>,
    ) -> Result<Self> {
        let model = Self {
            f,
            h,
            q,
            r_nominal,
            control: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_control(mut self, control: DVector<f64>) -> Result<Self> {
        if control.len() != self.state_dim() {
            return Err(Error::dims("control", self.state_dim(), control.len()));
        }
        self.control = Some(control);
        Ok(self)
    }

    /// Same model with a different measurement covariance.
    pub fn with_r(&self, r: DMatrix<f64>) -> Result<Self> {
        let model = Self {
            r_nominal: r,
            ..self.clone()
        };
        model.validate()?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.meas_dim();
        if !linalg::is_square(&self.f, n) {
            return Err(Error::dims("f", format!("{n}x{n}"), shape(&self.f)));
        }
        if self.h.ncols() != n {
            return Err(Error::dims("h", format!("{m}x{n}"), shape(&self.h)));
        }
        if !linalg::is_square(&self.q, n) {
            return Err(Error::dims("q", format!("{n}x{n}"), shape(&self.q)));
        }
        if !linalg::is_square(&self.r_nominal, m) {
            return Err(Error::dims(
                "r_nominal",
                format!("{m}x{m}"),
                shape(&self.r_nominal),
            ));
        }
        if !linalg::is_psd(&self.q, linalg::PSD_TOL) {
            return Err(Error::ContractViolation(
                "q must be symmetric positive semidefinite".into(),
            ));
        }
        if !linalg::is_psd(&self.r_nominal, linalg::PSD_TOL) {
            return Err(Error::ContractViolation(
                "r_nominal must be symmetric positive semidefinite".into(),
            ));
        }
        if let Some(c) = &self.control {
            if c.len() != n {
                return Err(Error::dims("control", n, c.len()));
            }
        }
        Ok(())
    }
}

pub(crate) fn shape(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

/// State mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !linalg::is_square(&cov, mean.len()) {
            return Err(Error::dims(
                "belief covariance",
                format!("{0}x{0}", mean.len()),
                shape(&cov),
            ));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn check_dim(&self, n: usize, context: &'static str) -> Result<()> {
        if self.mean.len() != n || !linalg::is_square(&self.cov, n) {
            return Err(Error::dims(context, n, self.mean.len()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.mean
            .iter()
            .chain(self.cov.iter())
            .all(|v| v.is_finite())
    }
}

/// Confidence weights of the information form: `x = a_p * prior + a_r * z`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    /// n×n weight on the predicted state.
    pub a_p: DMatrix<f64>,
    /// n×m weight on the measurement.
    pub a_r: DMatrix<f64>,
}

impl WeightPair {
    /// Max deviation of `a_p + a_r h` from the identity.
    pub fn partition_error(&self, h: &DMatrix<f64>) -> f64 {
        let n = self.a_p.nrows();
        (&self.a_p + &self.a_r * h - DMatrix::identity(n, n)).amax()
    }
}

pub fn kf_predict(model: &StateSpaceModel, posterior: &GaussianBelief) -> Result<GaussianBelief> {
    posterior.check_dim(model.state_dim(), "kf_predict posterior")?;
    let mut mean = &model.f * &posterior.mean;
    if let Some(c) = &model.control {
        mean += c;
    }
    let cov = symmetrize(&(&model.f * &posterior.cov * model.f.transpose() + &model.q));
    Ok(GaussianBelief { mean, cov })
}

/// Kalman gain `p hᵀ (h p hᵀ + r)⁻¹`.
pub fn kf_gain(
    model: &StateSpaceModel,
    prior_cov: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = model.meas_dim();
    if !linalg::is_square(r, m) {
        return Err(Error::dims(
            "measurement covariance",
            format!("{m}x{m}"),
            shape(r),
        ));
    }
    let pht = prior_cov * model.h.transpose();
    let innovation = &model.h * &pht + r;
    let s_inv = spd_inverse(&innovation, "innovation covariance")?;
    Ok(pht * s_inv)
}

/// Covariance-form update using the model's nominal measurement covariance.
pub fn kf_update(
    model: &StateSpaceModel,
    prior: &GaussianBelief,
    z: &DVector<f64>,
) -> Result<GaussianBelief> {
    kf_update_with_r(model, prior, z, &model.r_nominal)
}

/// Covariance-form update with an explicit measurement covariance.
pub fn kf_update_with_r(
    model: &StateSpaceModel,
    prior: &GaussianBelief,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    prior.check_dim(model.state_dim(), "kf_update prior")?;
    if z.len() != model.meas_dim() {
        return Err(Error::dims("measurement", model.meas_dim(), z.len()));
    }
    let gain = kf_gain(model, &prior.cov, r)?;
    let innovation = z - &model.h * &prior.mean;
    let mean = &prior.mean + &gain * innovation;
    let cov = symmetrize(&(&prior.cov - &gain * &model.h * &prior.cov));
    Ok(GaussianBelief { mean, cov })
}

/// Information-form weights `a_p = (P⁻¹ + HᵀR⁻¹H)⁻¹P⁻¹`, `a_r = (P⁻¹ + HᵀR⁻¹H)⁻¹HᵀR⁻¹`.
pub fn information_weights(
    model: &StateSpaceModel,
    prior_cov: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<WeightPair> {
    let n = model.state_dim();
    let m = model.meas_dim();
    if !linalg::is_square(prior_cov, n) {
        return Err(Error::dims(
            "prior covariance",
            format!("{n}x{n}"),
            shape(prior_cov),
        ));
    }
    if !linalg::is_square(r, m) {
        return Err(Error::dims(
            "measurement covariance",
            format!("{m}x{m}"),
            shape(r),
        ));
    }
    let p_inv = spd_inverse(prior_cov, "prior covariance")?;
    let r_inv = spd_inverse(r, "measurement covariance")?;
    let ht_r_inv = model.h.transpose() * r_inv;
    let info = &p_inv + &ht_r_inv * &model.h;
    let info_inv = spd_inverse(&info, "information matrix")?;
    Ok(WeightPair {
        a_p: &info_inv * p_inv,
        a_r: info_inv * ht_r_inv,
    })
}

pub fn combine_weighted(
    weights: &WeightPair,
    prior_mean: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = weights.a_p.nrows();
    if weights.a_p.ncols() != prior_mean.len() || prior_mean.len() != n {
        return Err(Error::dims(
            "prior mean",
            weights.a_p.ncols(),
            prior_mean.len(),
        ));
    }
    if weights.a_r.ncols() != z.len() || weights.a_r.nrows() != n {
        return Err(Error::dims("measurement", weights.a_r.ncols(), z.len()));
    }
    Ok(&weights.a_p * prior_mean + &weights.a_r * z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(f: f64, h: f64, q: f64, r: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, f),
            DMatrix::from_element(1, 1, h),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
        )
        .unwrap()
    }

    fn belief1(mean: f64, var: f64) -> GaussianBelief {
        GaussianBelief::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
        )
        .unwrap()
    }

    #[test]
    fn predict_identity_dynamics() {
        let model = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let post = GaussianBelief::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2))
            .unwrap();
        let prior = kf_predict(&model, &post).unwrap();
        assert_eq!(prior, post);
    }

    #[test]
    fn predict_with_control() {
        let model = scalar(1.0, 1.0, 1.0, 1.0)
            .with_control(DVector::from_element(1, 1.0))
            .unwrap();
        let prior = kf_predict(&model, &belief1(0.0, 1.0)).unwrap();
        assert_eq!(prior.mean[0], 1.0);
        assert_eq!(prior.cov[(0, 0)], 2.0);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let model = scalar(1.0, 1.0, 1.0, 1.0);
        let post = GaussianBelief::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            kf_predict(&model, &post),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scalar_update_by_hand() {
        let model = scalar(1.0, 1.0, 0.0, 1.0);
        let prior = belief1(0.0, 1.0);
        let gain = kf_gain(&model, &prior.cov, &model.r_nominal).unwrap();
        assert!((gain[(0, 0)] - 0.5).abs() < 1e-15);
        let post = kf_update(&model, &prior, &DVector::from_element(1, 1.0)).unwrap();
        assert!((post.mean[0] - 0.5).abs() < 1e-15);
        assert!((post.cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn huge_r_ignores_measurement() {
        let model = scalar(1.0, 1.0, 0.0, 1e12);
        let prior = belief1(3.0, 1.0);
        let post = kf_update(&model, &prior, &DVector::from_element(1, 100.0)).unwrap();
        assert!((post.mean[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_h_leaves_prior_untouched() {
        let model = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let prior = GaussianBelief::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let post = kf_update(&model, &prior, &DVector::from_element(1, 7.0)).unwrap();
        assert_eq!(post, prior);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let model = scalar(1.0, 1.0, 0.0, 0.0);
        let err =
            kf_update(&model, &belief1(0.0, 0.0), &DVector::from_element(1, 1.0)).unwrap_err();
        assert!(matches!(
            err,
            Error::Singular {
                matrix: "innovation covariance",
                ..
            }
        ));
    }

    #[test]
    fn weights_scalar_half() {
        let model = scalar(1.0, 1.0, 0.0, 1.0);
        let w = information_weights(&model, &DMatrix::identity(1, 1), &model.r_nominal).unwrap();
        assert!((w.a_p[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((w.a_r[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weights_large_r_trust_prior() {
        let model = scalar(1.0, 1.0, 0.0, 1e6);
        let w = information_weights(&model, &DMatrix::identity(1, 1), &model.r_nominal).unwrap();
        assert!((w.a_p[(0, 0)] - 1.0).abs() < 1e-5);
        assert!(w.a_r[(0, 0)].abs() < 1e-5);
    }

    #[test]
    fn weights_symmetric_case() {
        let p = DMatrix::from_row_slice(3, 3, &[2.0, 0.4, 0.1, 0.4, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let model = StateSpaceModel::new(
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 3),
            p.clone(),
        )
        .unwrap();
        let w = information_weights(&model, &p, &p).unwrap();
        let half = DMatrix::identity(3, 3) * 0.5;
        assert!((&w.a_p - &half).amax() < 1e-12);
        assert!((&w.a_r - &half).amax() < 1e-12);
        assert!(w.partition_error(&model.h) < 1e-9);
    }

    #[test]
    fn weights_reject_singular_prior() {
        let model = scalar(1.0, 1.0, 0.0, 1.0);
        let err = information_weights(&model, &DMatrix::zeros(1, 1), &model.r_nominal).unwrap_err();
        assert!(matches!(
            err,
            Error::Singular {
                matrix: "prior covariance",
                ..
            }
        ));
    }

    #[test]
    fn combine_trivial_weights() {
        let w = WeightPair {
            a_p: DMatrix::identity(2, 2),
            a_r: DMatrix::zeros(2, 2),
        };
        let prior = DVector::from_vec(vec![1.0, 2.0]);
        let out = combine_weighted(&w, &prior, &DVector::from_vec(vec![9.0, 9.0])).unwrap();
        assert_eq!(out, prior);

        let w = WeightPair {
            a_p: DMatrix::from_element(1, 1, 0.5),
            a_r: DMatrix::from_element(1, 1, 0.5),
        };
        let out = combine_weighted(&w, &DVector::zeros(1), &DVector::from_element(1, 2.0)).unwrap();
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn model_rejects_asymmetric_q() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        let err = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 2),
            q,
            DMatrix::identity(1, 1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ContractViolation(_)));
    }
}
