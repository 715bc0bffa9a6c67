//! Two-component Gaussian mixture fitting of measurement-noise samples.
//!
//! The fitted components are labeled by covariance size: `s` is the nominal
//! (small-covariance) part of the noise, `b` the impulsive (big-covariance)
//! part. The weight of `s` is read as the Gaussian proportion of the noise and
//! drives the TG adjustment factor, which rescales `cov_s` into the effective
//! covariance fed to the covariance-adaptive Student's-t filter.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, spd_inverse, sym_det, symmetrize};

/// Result of a two-component mixture fit.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMixtureEstimate {
    pub weight_s: f64,
    pub weight_b: f64,
    pub mean_s: DVector<f64>,
    pub mean_b: DVector<f64>,
    pub cov_s: DMatrix<f64>,
    pub cov_b: DMatrix<f64>,
    pub log_likelihood: f64,
}

impl NoiseMixtureEstimate {
    /// Single-Gaussian fallback: all weight on `s`, both components equal.
    pub fn single(mean: DVector<f64>, cov: DMatrix<f64>, log_likelihood: f64) -> Self {
        Self {
            weight_s: 1.0,
            weight_b: 0.0,
            mean_s: mean.clone(),
            mean_b: mean,
            cov_s: cov.clone(),
            cov_b: cov,
            log_likelihood,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean_s.len()
    }

    /// Gaussian proportion of the noise.
    pub fn gaussian_share(&self) -> f64 {
        self.weight_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmSettings {
    pub max_iters: usize,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-8,
            n_restarts: 5,
            seed: 0,
        }
    }
}

impl EmSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(
                "tol",
                format!("must be positive, got {}", self.tol),
            ));
        }
        if self.n_restarts < 1 {
            return Err(Error::invalid("n_restarts", "must be at least 1"));
        }
        Ok(())
    }
}

/// Best restart of an EM fit together with its log-likelihood trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub estimate: NoiseMixtureEstimate,
    /// Log-likelihood after each E-step of the winning restart.
    pub trace: Vec<f64>,
    pub restart: usize,
}

/// Multivariate normal density.
pub fn normal_density(u: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let m = mean.len();
    if u.len() != m || !linalg::is_square(cov, m) {
        return Err(Error::dims("normal density", m, u.len()));
    }
    let inv = spd_inverse(cov, "component covariance")?;
    let det = sym_det(cov);
    let d = u - mean;
    let maha = d.dot(&(&inv * &d));
    Ok((-0.5 * maha).exp() / ((2.0 * PI).powi(m as i32) * det).sqrt())
}

/// Mixture density `w_s N(u; mean_s, cov_s) + w_b N(u; mean_b, cov_b)`.
pub fn gmm_pdf(u: &DVector<f64>, estimate: &NoiseMixtureEstimate) -> Result<f64> {
    let mut total = 0.0;
    if estimate.weight_s > 0.0 {
        total += estimate.weight_s * normal_density(u, &estimate.mean_s, &estimate.cov_s)?;
    }
    if estimate.weight_b > 0.0 {
        total += estimate.weight_b * normal_density(u, &estimate.mean_b, &estimate.cov_b)?;
    }
    Ok(total)
}

pub fn sample_mean(samples: &[DVector<f64>]) -> DVector<f64> {
    let m = samples.first().map_or(0, |s| s.len());
    let mut mean = DVector::zeros(m);
    for s in samples {
        mean += s;
    }
    if !samples.is_empty() {
        mean /= samples.len() as f64;
    }
    mean
}

/// Maximum-likelihood (divide-by-count) covariance about the sample mean.
pub fn sample_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let mean = sample_mean(samples);
    let m = mean.len();
    let mut cov = DMatrix::zeros(m, m);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    if !samples.is_empty() {
        cov /= samples.len() as f64;
    }
    symmetrize(&cov)
}

fn check_samples(samples: &[DVector<f64>]) -> Result<usize> {
    let m = samples.first().map_or(0, |s| s.len());
    if m == 0 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: samples.len(),
        });
    }
    if samples.len() < 10 * m {
        return Err(Error::InsufficientData {
            needed: 10 * m,
            got: samples.len(),
        });
    }
    for s in samples {
        if s.len() != m {
            return Err(Error::dims("mixture sample", m, s.len()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::ContractViolation(
                "mixture samples must be finite".into(),
            ));
        }
    }
    Ok(m)
}

struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Precomputed pieces of `log(w N(u; mean, cov))`.
struct LogDensity {
    chol: Cholesky<f64, Dyn>,
    offset: f64,
    mean: DVector<f64>,
}

impl LogDensity {
    fn new(c: &Component) -> Option<Self> {
        let chol = c.cov.clone().cholesky()?;
        let m = c.mean.len() as f64;
        let log_det = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let offset = c.weight.ln() - 0.5 * (m * (2.0 * PI).ln() + log_det);
        offset.is_finite().then(|| Self {
            chol,
            offset,
            mean: c.mean.clone(),
        })
    }

    fn eval(&self, u: &DVector<f64>) -> f64 {
        let d = u - &self.mean;
        let y = self.chol.l_dirty().solve_lower_triangular(&d).unwrap_or(d);
        self.offset - 0.5 * y.norm_squared()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Weighted M-step for one component; `None` when it has collapsed.
fn m_step(samples: &[DVector<f64>], resp: &[f64], floor: f64) -> Option<Component> {
    let n = samples.len() as f64;
    let mass: f64 = resp.iter().sum();
    if mass < 1.0 {
        return None;
    }
    let m = samples[0].len();
    let mut mean = DVector::zeros(m);
    for (s, r) in samples.iter().zip(resp) {
        mean += s * *r;
    }
    mean /= mass;
    let mut cov = DMatrix::zeros(m, m);
    for (s, r) in samples.iter().zip(resp) {
        let d = s - &mean;
        cov += (&d * d.transpose()) * *r;
    }
    cov /= mass;
    for i in 0..m {
        cov[(i, i)] += floor;
    }
    Some(Component {
        weight: mass / n,
        mean,
        cov: symmetrize(&cov),
    })
}

/// k-means++-style seeding on sample norms, turned into hard responsibilities.
fn seed_responsibilities(samples: &[DVector<f64>], rng: &mut ChaCha20Rng) -> Option<Vec<f64>> {
    let norms: Vec<f64> = samples.iter().map(|s| s.norm()).collect();
    let first = norms[rng.random_range(0..norms.len())];
    let dist: Vec<f64> = norms.iter().map(|v| (v - first).powi(2)).collect();
    let total: f64 = dist.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    let mut second = norms[norms.len() - 1];
    for (v, d) in norms.iter().zip(&dist) {
        if target < *d {
            second = *v;
            break;
        }
        target -= d;
    }
    let resp: Vec<f64> = norms
        .iter()
        .map(|v| {
            if (v - first).abs() <= (v - second).abs() {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Some(resp)
}

struct RestartOutcome {
    comps: [Component; 2],
    trace: Vec<f64>,
}

fn run_restart(
    samples: &[DVector<f64>],
    settings: &EmSettings,
    restart: usize,
    floor: f64,
) -> Option<RestartOutcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(settings.seed);
    rng.set_stream(restart as u64);
    let resp_a = seed_responsibilities(samples, &mut rng)?;
    let resp_b: Vec<f64> = resp_a.iter().map(|r| 1.0 - r).collect();
    let mut comps = [
        m_step(samples, &resp_a, floor)?,
        m_step(samples, &resp_b, floor)?,
    ];

    let mut trace = Vec::new();
    let mut resp_a = vec![0.0; samples.len()];
    let mut resp_b = vec![0.0; samples.len()];
    for iter in 0..settings.max_iters {
        let la = LogDensity::new(&comps[0])?;
        let lb = LogDensity::new(&comps[1])?;
        let mut ll = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let a = la.eval(s);
            let b = lb.eval(s);
            let total = log_sum_exp(a, b);
            ll += total;
            resp_a[i] = (a - total).exp();
            resp_b[i] = (b - total).exp();
        }
        if !ll.is_finite() {
            return None;
        }
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| (ll - prev).abs() <= settings.tol * prev.abs());
        trace.push(ll);
        if converged || iter + 1 == settings.max_iters {
            break;
        }
        comps = [
            m_step(samples, &resp_a, floor)?,
            m_step(samples, &resp_b, floor)?,
        ];
    }
    Some(RestartOutcome { comps, trace })
}

/// EM fit of a two-component mixture, best of `n_restarts` by log-likelihood.
pub fn fit_gmm2(samples: &[DVector<f64>], settings: &EmSettings) -> Result<NoiseMixtureEstimate> {
    fit_gmm2_traced(samples, settings).map(|fit| fit.estimate)
}

pub fn fit_gmm2_traced(samples: &[DVector<f64>], settings: &EmSettings) -> Result<EmFit> {
    settings.validate()?;
    let m = check_samples(samples)?;
    let pooled = sample_covariance(samples);
    let floor = 1e-8 * pooled.trace() / m as f64;
    if !(floor > 0.0) {
        return Err(Error::DegenerateFit);
    }

    let mut best: Option<(usize, RestartOutcome)> = None;
    for restart in 0..settings.n_restarts {
        let Some(outcome) = run_restart(samples, settings, restart, floor) else {
            continue;
        };
        let ll = *outcome.trace.last().expect("at least one E-step");
        // strict comparison keeps the lowest restart index on ties
        if best
            .as_ref()
            .is_none_or(|(_, b)| ll > *b.trace.last().expect("non-empty"))
        {
            best = Some((restart, outcome));
        }
    }
    let (restart, outcome) = best.ok_or(Error::DegenerateFit)?;
    let log_likelihood = *outcome.trace.last().expect("non-empty");
    let [a, b] = outcome.comps;
    let (s, big) = if sym_det(&a.cov) <= sym_det(&b.cov) {
        (a, b)
    } else {
        (b, a)
    };
    Ok(EmFit {
        estimate: NoiseMixtureEstimate {
            weight_s: s.weight,
            weight_b: 1.0 - s.weight,
            mean_s: s.mean,
            mean_b: big.mean,
            cov_s: s.cov,
            cov_b: big.cov,
            log_likelihood,
        },
        trace: outcome.trace,
        restart,
    })
}

/// TG = 4·sqrt(det(cov_b·cov_s⁻¹)) / (3 + exp(10·P)), P the Gaussian share.
pub fn tg_factor(estimate: &NoiseMixtureEstimate) -> Result<f64> {
    let p = estimate.weight_s;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ContractViolation(format!(
            "weight_s must lie in [0, 1], got {p}"
        )));
    }
    let m = estimate.dim();
    if !linalg::is_square(&estimate.cov_s, m) || !linalg::is_square(&estimate.cov_b, m) {
        return Err(Error::dims(
            "mixture covariances",
            m,
            estimate.cov_s.nrows(),
        ));
    }
    let s_inv = spd_inverse(&estimate.cov_s, "cov_s")?;
    let ratio = (&estimate.cov_b * s_inv).determinant().max(0.0);
    Ok(4.0 * ratio.sqrt() / (3.0 + (10.0 * p).exp()))
}

/// Effective measurement covariance `TG · cov_s`.
pub fn effective_covariance(estimate: &NoiseMixtureEstimate) -> Result<DMatrix<f64>> {
    let tg = tg_factor(estimate)?;
    Ok(symmetrize(&(&estimate.cov_s * tg)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(m: usize, v: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal_element(m, m, v)
    }

    fn benchmark_mixture(p: f64) -> NoiseMixtureEstimate {
        NoiseMixtureEstimate {
            weight_s: p,
            weight_b: 1.0 - p,
            mean_s: DVector::zeros(2),
            mean_b: DVector::zeros(2),
            cov_s: iso(2, 0.1),
            cov_b: iso(2, 10.0),
            log_likelihood: 0.0,
        }
    }

    #[test]
    fn standard_normal_peak() {
        let est = NoiseMixtureEstimate::single(DVector::zeros(2), iso(2, 1.0), 0.0);
        let v = gmm_pdf(&DVector::zeros(2), &est).unwrap();
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn identical_components_collapse() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.7]);
        let mean = DVector::from_vec(vec![0.3, -0.1]);
        let single = NoiseMixtureEstimate::single(mean.clone(), cov.clone(), 0.0);
        let mut half = single.clone();
        half.weight_s = 0.5;
        half.weight_b = 0.5;
        let u = DVector::from_vec(vec![1.0, 0.5]);
        let a = gmm_pdf(&u, &single).unwrap();
        let b = gmm_pdf(&u, &half).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn benchmark_mixture_density_at_origin() {
        // per-component densities evaluated directly: 1/(2π·0.1) and 1/(2π·10)
        let expected = 0.9 / (2.0 * PI * 0.1) + 0.1 / (2.0 * PI * 10.0);
        let v = gmm_pdf(&DVector::zeros(2), &benchmark_mixture(0.9)).unwrap();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        assert!((v - 1.433986037257977).abs() < 1e-12);
    }

    #[test]
    fn singular_component_is_rejected() {
        let mut est = benchmark_mixture(0.9);
        est.cov_s = DMatrix::zeros(2, 2);
        assert!(matches!(
            gmm_pdf(&DVector::zeros(2), &est),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(tg_factor(&est), Err(Error::Singular { .. })));
    }

    #[test]
    fn tg_benchmark_configuration() {
        let tg = tg_factor(&benchmark_mixture(0.9)).unwrap();
        assert!((tg - 0.04934565242277775).abs() < 1e-12, "{tg}");
        let r = effective_covariance(&benchmark_mixture(0.9)).unwrap();
        assert!((r - iso(2, 0.004934565242277775)).amax() < 1e-14);
    }

    #[test]
    fn tg_all_impulsive_recovers_big() {
        let tg = tg_factor(&benchmark_mixture(0.0)).unwrap();
        assert!((tg - 100.0).abs() < 1e-10);
        let r = effective_covariance(&benchmark_mixture(0.0)).unwrap();
        assert!((r - iso(2, 10.0)).amax() < 1e-10);
    }

    #[test]
    fn tg_equal_components() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let mut est = NoiseMixtureEstimate::single(DVector::zeros(2), r.clone(), 0.0);
        est.weight_s = 0.0;
        est.weight_b = 1.0;
        assert!((tg_factor(&est).unwrap() - 1.0).abs() < 1e-12);
        assert!((effective_covariance(&est).unwrap() - r).amax() < 1e-12);
    }

    #[test]
    fn tg_rejects_bad_weight() {
        let est = benchmark_mixture(1.5);
        assert!(matches!(tg_factor(&est), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn tg_strictly_decreasing_in_share() {
        let values: Vec<f64> = (0..=10)
            .map(|i| tg_factor(&benchmark_mixture(i as f64 / 10.0)).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    }

    #[test]
    fn insufficient_samples() {
        let samples = vec![DVector::zeros(2); 19];
        let err = fit_gmm2(&samples, &EmSettings::default()).unwrap_err();
        assert_eq!(
            err,
            Error::InsufficientData {
                needed: 20,
                got: 19
            }
        );
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let samples = vec![DVector::from_vec(vec![1.0, 1.0]); 40];
        assert_eq!(
            fit_gmm2(&samples, &EmSettings::default()),
            Err(Error::DegenerateFit)
        );
    }

    #[test]
    fn non_finite_samples_rejected() {
        let mut samples = vec![DVector::from_vec(vec![1.0, 1.0]); 40];
        samples[3][1] = f64::NAN;
        assert!(matches!(
            fit_gmm2(&samples, &EmSettings::default()),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn settings_validation() {
        let bad = EmSettings {
            tol: 0.0,
            ..EmSettings::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmSettings {
            n_restarts: 0,
            ..EmSettings::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmSettings {
            max_iters: 0,
            ..EmSettings::default()
        };
        assert!(bad.validate().is_err());
    }
}
