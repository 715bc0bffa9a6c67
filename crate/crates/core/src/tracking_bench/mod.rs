//! Constant-velocity tracking benchmark: model construction, trajectory
//! simulation, per-step filtering with KF/TKF/TGKF and Monte Carlo RMSE.

mod experiment;
mod weight_demo;

pub use experiment::{run_experiment, BenchSettings, ExperimentReport, Protocol, Table};
pub use weight_demo::{run_weight_demo, WeightDemoSpec, WeightDemoStep};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::linear_gaussian::{kf_predict, kf_update_with_r, GaussianBelief, StateSpaceModel};
use crate::mixture_estimation::{
    effective_covariance, fit_gmm2, sample_covariance, sample_mean, EmSettings,
    NoiseMixtureEstimate,
};
use crate::noise_lab::{
    sample_alpha_stable_vectors, sample_gaussian, sample_mixture, AlphaStableSpec,
    MixtureNoiseSpec, NoiseComponent, RandomStream,
};
use crate::robust_filters::{tkf_step, TkfConfig};

/// Posterior covariance trace beyond which a filter counts as diverged.
pub const DIVERGENCE_TRACE: f64 = 1e12;

/// Substream tags used inside one Monte Carlo run.
const PROCESS_TAG: u64 = 0;
const MEASUREMENT_TAG: u64 = 1;
const EM_TAG: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvModelSpec {
    /// Sampling interval in seconds.
    pub dt: f64,
    /// True initial state `[X, Y, Ẋ, Ẏ]`.
    pub x0_true: [f64; 4],
    /// Initial filter mean.
    pub x0_est: [f64; 4],
    /// Initial filter covariance, row-major 4×4.
    pub p0: [[f64; 4]; 4],
    pub steps: usize,
    /// Observe X position and Y velocity instead of both positions.
    pub observe_y_velocity: bool,
    /// Draw process noise from Q when simulating the truth.
    pub process_noise: bool,
}

impl Default for CvModelSpec {
    fn default() -> Self {
        let mut p0 = [[0.0; 4]; 4];
        for (i, row) in p0.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self {
            dt: 1.0,
            x0_true: [0.0, 0.0, 15.0, 15.0],
            x0_est: [15.0, 15.0, 15.0, 15.0],
            p0,
            steps: 100,
            observe_y_velocity: false,
            process_noise: true,
        }
    }
}

impl CvModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if self.steps < 1 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if !linalg::is_psd(&self.p0_matrix(), linalg::PSD_TOL) {
            return Err(Error::invalid(
                "p0",
                "must be symmetric positive semidefinite",
            ));
        }
        Ok(())
    }

    pub fn p0_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(4, 4, |i, j| self.p0[i][j])
    }

    pub fn initial_belief(&self) -> GaussianBelief {
        GaussianBelief {
            mean: DVector::from_row_slice(&self.x0_est),
            cov: self.p0_matrix(),
        }
    }
}

/// Two-dimensional constant-velocity model.
///
/// `r_nominal` is set to the identity; benchmark filters receive their
/// measurement covariance explicitly per run.
pub fn build_cv_model(spec: &CvModelSpec) -> Result<StateSpaceModel> {
    spec.validate()?;
    let dt = spec.dt;
    #[rustfmt::skip]
    let f = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, dt, 0.0,
        0.0, 1.0, 0.0, dt,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    let h = if spec.observe_y_velocity {
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    } else {
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    };
    let (d3, d2) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0);
    #[rustfmt::skip]
    let q = DMatrix::from_row_slice(4, 4, &[
        d3, 0.0, d2, 0.0,
        0.0, d3, 0.0, d2,
        d2, 0.0, dt * dt, 0.0,
        0.0, d2, 0.0, dt * dt,
    ]);
    StateSpaceModel::new(f, h, q, DMatrix::identity(2, 2))
}

/// Measurement-noise regime of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasurementNoise {
    None,
    Mixture(MixtureNoiseSpec),
    /// Independent symmetric stable noise on each measurement coordinate.
    AlphaStable(AlphaStableSpec),
}

impl MeasurementNoise {
    pub fn sample(&self, dim: usize, count: usize, stream: RandomStream) -> Result<NoiseDraws> {
        match self {
            MeasurementNoise::None => Ok(NoiseDraws {
                samples: vec![DVector::zeros(dim); count],
                labels: None,
            }),
            MeasurementNoise::Mixture(spec) => {
                if spec.dim() != dim {
                    return Err(Error::dims("mixture noise", dim, spec.dim()));
                }
                let draws = sample_mixture(spec, count, stream)?;
                Ok(NoiseDraws {
                    samples: draws.samples,
                    labels: Some(draws.labels),
                })
            }
            MeasurementNoise::AlphaStable(spec) => Ok(NoiseDraws {
                samples: sample_alpha_stable_vectors(spec, dim, count, stream)?,
                labels: None,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraws {
    pub samples: Vec<DVector<f64>>,
    pub labels: Option<Vec<NoiseComponent>>,
}

/// Simulated truth with its measurements and the noise that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub truth: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub noise: Vec<DVector<f64>>,
    pub labels: Option<Vec<NoiseComponent>>,
}

pub fn simulate_truth(
    model: &StateSpaceModel,
    spec: &CvModelSpec,
    noise: &MeasurementNoise,
    stream: RandomStream,
) -> Result<Trajectory> {
    spec.validate()?;
    let n = model.state_dim();
    let steps = spec.steps;
    let process = if spec.process_noise {
        sample_gaussian(&model.q, steps, stream.substream(PROCESS_TAG))?
    } else {
        vec![DVector::zeros(n); steps]
    };
    let draws = noise.sample(model.meas_dim(), steps, stream.substream(MEASUREMENT_TAG))?;

    let mut x = DVector::from_row_slice(&spec.x0_true);
    let mut truth = Vec::with_capacity(steps);
    let mut measurements = Vec::with_capacity(steps);
    for (w, v) in process.iter().zip(&draws.samples) {
        x = &model.f * &x + w;
        measurements.push(&model.h * &x + v);
        truth.push(x.clone());
    }
    Ok(Trajectory {
        truth,
        measurements,
        noise: draws.samples,
        labels: draws.labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Kf,
    Tkf,
    Tgkf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Kf, FilterKind::Tkf, FilterKind::Tgkf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Kf => "kf",
            FilterKind::Tkf => "tkf",
            FilterKind::Tgkf => "tgkf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kf" => Ok(FilterKind::Kf),
            "tkf" => Ok(FilterKind::Tkf),
            "tgkf" => Ok(FilterKind::Tgkf),
            other => Err(Error::invalid(
                "filters",
                format!("unknown filter `{other}`"),
            )),
        }
    }
}

/// One filter's pass over a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrack {
    pub kind: FilterKind,
    pub estimates: Vec<DVector<f64>>,
    /// Squared position error per step.
    pub sq_errors: Vec<f64>,
    pub diverged: bool,
    /// Steps whose posterior covariance failed the symmetry/PSD check.
    pub psd_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub truth: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub tracks: Vec<FilterTrack>,
    pub mixture: Option<NoiseMixtureEstimate>,
    /// The mixture fit collapsed and a single Gaussian was used instead.
    pub mixture_fallback: bool,
}

impl RunResult {
    pub fn track(&self, kind: FilterKind) -> Option<&FilterTrack> {
        self.tracks.iter().find(|t| t.kind == kind)
    }
}

fn covariance_is_sound(cov: &DMatrix<f64>) -> bool {
    let scale = cov.amax();
    if scale == 0.0 {
        return true;
    }
    if (cov - cov.transpose()).amax() > 1e-10 * scale {
        return false;
    }
    linalg::is_psd(&symmetrize(cov), 1e-9)
}

/// Position error of an estimate, taken from the first two state components.
fn sq_position_error(truth: &DVector<f64>, est: &DVector<f64>) -> f64 {
    (truth[0] - est[0]).powi(2) + (truth[1] - est[1]).powi(2)
}

fn run_filter<F>(
    kind: FilterKind,
    model: &StateSpaceModel,
    spec: &CvModelSpec,
    traj: &Trajectory,
    mut step: F,
) -> FilterTrack
where
    F: FnMut(&GaussianBelief, &DVector<f64>) -> Result<GaussianBelief>,
{
    let steps = traj.truth.len();
    let mut belief = spec.initial_belief();
    let mut estimates = Vec::with_capacity(steps);
    let mut sq_errors = Vec::with_capacity(steps);
    let mut diverged = false;
    let mut psd_violations = 0;
    for (truth, z) in traj.truth.iter().zip(&traj.measurements) {
        if !diverged {
            match step(&belief, z) {
                Ok(next) if next.is_finite() && next.cov.trace() <= DIVERGENCE_TRACE => {
                    if !covariance_is_sound(&next.cov) {
                        psd_violations += 1;
                    }
                    belief = next;
                }
                _ => diverged = true,
            }
        }
        if diverged {
            estimates.push(DVector::from_element(model.state_dim(), f64::NAN));
            sq_errors.push(f64::NAN);
        } else {
            sq_errors.push(sq_position_error(truth, &belief.mean));
            estimates.push(belief.mean.clone());
        }
    }
    FilterTrack {
        kind,
        estimates,
        sq_errors,
        diverged,
        psd_violations,
    }
}

/// Sample covariance of the noise. A singular estimate gets a small diagonal
/// load; `fallback` is used only if that still cannot be inverted.
fn nominal_covariance(noise: &[DVector<f64>], fallback: &DMatrix<f64>) -> DMatrix<f64> {
    let cov = sample_covariance(noise);
    if linalg::spd_inverse(&cov, "nominal covariance").is_ok() {
        return cov;
    }
    let m = cov.nrows();
    let load = (1e-9 * cov.trace() / m as f64).max(1e-12);
    let loaded = &cov + DMatrix::identity(m, m) * load;
    if loaded.iter().all(|v| v.is_finite())
        && linalg::spd_inverse(&loaded, "nominal covariance").is_ok()
    {
        loaded
    } else {
        fallback.clone()
    }
}

/// Mixture fit on the noise sequence, falling back to a single Gaussian when it
/// collapses or there are too few samples to fit two components.
fn fit_noise_mixture(
    noise: &[DVector<f64>],
    em: &EmSettings,
    fallback: &DMatrix<f64>,
) -> Result<(NoiseMixtureEstimate, bool)> {
    match fit_gmm2(noise, em) {
        Ok(est) if effective_covariance(&est).is_ok_and(|r| linalg::is_positive_definite(&r)) => {
            Ok((est, false))
        }
        Ok(_) | Err(Error::DegenerateFit) | Err(Error::InsufficientData { .. }) => Ok((
            NoiseMixtureEstimate::single(
                sample_mean(noise),
                nominal_covariance(noise, fallback),
                f64::NAN,
            ),
            true,
        )),
        Err(e) => Err(e),
    }
}

/// Simulates one Monte Carlo run and filters it with every requested filter.
pub fn simulate_run(
    model: &StateSpaceModel,
    spec: &CvModelSpec,
    noise: &MeasurementNoise,
    filters: &[FilterKind],
    config: &TkfConfig,
    em: &EmSettings,
    stream: RandomStream,
) -> Result<RunResult> {
    let traj = simulate_truth(model, spec, noise, stream)?;
    let r_nominal = nominal_covariance(&traj.noise, &model.r_nominal);

    let (mixture, mixture_fallback) = if filters.contains(&FilterKind::Tgkf) {
        let em = EmSettings {
            seed: stream.substream(EM_TAG).derived_seed(),
            ..*em
        };
        let (est, fell_back) = fit_noise_mixture(&traj.noise, &em, &model.r_nominal)?;
        (Some(est), fell_back)
    } else {
        (None, false)
    };

    let mut tracks = Vec::with_capacity(filters.len());
    for &kind in filters {
        let track = match kind {
            FilterKind::Kf => run_filter(kind, model, spec, &traj, |b, z| {
                let prior = kf_predict(model, b)?;
                kf_update_with_r(model, &prior, z, &r_nominal)
            }),
            FilterKind::Tkf => run_filter(kind, model, spec, &traj, |b, z| {
                tkf_step(model, b, z, &r_nominal, config)
            }),
            FilterKind::Tgkf => {
                let r_eff = effective_covariance(mixture.as_ref().expect("fitted above"))?;
                run_filter(kind, model, spec, &traj, |b, z| {
                    tkf_step(model, b, z, &r_eff, config)
                })
            }
        };
        tracks.push(track);
    }
    Ok(RunResult {
        truth: traj.truth,
        measurements: traj.measurements,
        tracks,
        mixture,
        mixture_fallback,
    })
}

/// Running sums of squared position errors; merging partial sums is exact
/// up to floating-point addition order.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorAccumulator {
    pub sum_sq: Vec<f64>,
    pub runs: usize,
    pub diverged: usize,
}

impl ErrorAccumulator {
    pub fn new(steps: usize) -> Self {
        Self {
            sum_sq: vec![0.0; steps],
            runs: 0,
            diverged: 0,
        }
    }

    pub fn add(&mut self, track: &FilterTrack) -> Result<()> {
        if track.sq_errors.len() != self.sum_sq.len() {
            return Err(Error::ContractViolation(format!(
                "run length {} differs from {}",
                track.sq_errors.len(),
                self.sum_sq.len()
            )));
        }
        if track.diverged {
            self.diverged += 1;
            return Ok(());
        }
        for (acc, e) in self.sum_sq.iter_mut().zip(&track.sq_errors) {
            *acc += e;
        }
        self.runs += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ErrorAccumulator) -> Result<()> {
        if other.sum_sq.len() != self.sum_sq.len() {
            return Err(Error::ContractViolation(
                "cannot merge accumulators of different length".into(),
            ));
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.runs += other.runs;
        self.diverged += other.diverged;
        Ok(())
    }

    pub fn finish(&self, filter: FilterKind) -> RmseSeries {
        let rmse = self
            .sum_sq
            .iter()
            .map(|s| {
                if self.runs == 0 {
                    f64::NAN
                } else {
                    (s / self.runs as f64).sqrt()
                }
            })
            .collect();
        RmseSeries {
            filter,
            rmse,
            n_runs: self.runs,
            n_diverged: self.diverged,
        }
    }
}

/// Per-step RMSE of one filter over the Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseSeries {
    pub filter: FilterKind,
    pub rmse: Vec<f64>,
    /// Runs that entered the average.
    pub n_runs: usize,
    /// Runs excluded because the filter diverged.
    pub n_diverged: usize,
}

impl RmseSeries {
    pub fn time_average(&self) -> f64 {
        self.rmse.iter().sum::<f64>() / self.rmse.len().max(1) as f64
    }

    /// Mean RMSE over steps `from..` (0-based).
    pub fn time_average_from(&self, from: usize) -> f64 {
        let tail = &self.rmse[from.min(self.rmse.len())..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

pub fn rmse_curve(results: &[RunResult], filter: FilterKind) -> Result<RmseSeries> {
    let steps = results.first().map_or(0, |r| r.truth.len());
    let mut acc = ErrorAccumulator::new(steps);
    for run in results {
        let track = run.track(filter).ok_or_else(|| {
            Error::ContractViolation(format!("filter {filter} missing from a run"))
        })?;
        acc.add(track)?;
    }
    Ok(acc.finish(filter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cv_model_matrices() {
        let model = build_cv_model(&CvModelSpec::default()).unwrap();
        assert_eq!(
            model.f.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 1.0, 0.0]
        );
        assert!((model.q[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(model.q, model.q.transpose());
        let z = &model.h * DVector::from_vec(vec![0.0, 0.0, 15.0, 15.0]);
        assert_eq!(z, DVector::zeros(2));
    }

    #[test]
    fn observe_y_velocity_reads_y_velocity() {
        let spec = CvModelSpec {
            observe_y_velocity: true,
            ..CvModelSpec::default()
        };
        let model = build_cv_model(&spec).unwrap();
        let z = &model.h * DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(z, DVector::from_vec(vec![1.0, 4.0]));
    }

    #[test]
    fn first_prediction_from_initial_estimate() {
        let model = build_cv_model(&CvModelSpec::default()).unwrap();
        let x0 = GaussianBelief::new(
            DVector::from_vec(vec![0.0, 0.0, 15.0, 15.0]),
            DMatrix::identity(4, 4),
        )
        .unwrap();
        let prior = kf_predict(&model, &x0).unwrap();
        assert_eq!(prior.mean, DVector::from_vec(vec![15.0, 15.0, 15.0, 15.0]));
    }

    #[test]
    fn noiseless_truth_moves_at_constant_speed() {
        let spec = CvModelSpec {
            process_noise: false,
            steps: 10,
            ..CvModelSpec::default()
        };
        let model = build_cv_model(&spec).unwrap();
        let traj = simulate_truth(
            &model,
            &spec,
            &MeasurementNoise::None,
            RandomStream::new(1, 0),
        )
        .unwrap();
        for (k, (x, z)) in traj.truth.iter().zip(&traj.measurements).enumerate() {
            let pos = 15.0 * (k + 1) as f64;
            assert_eq!((x[0], x[1]), (pos, pos));
            assert_eq!((z[0], z[1]), (pos, pos));
        }
    }

    #[test]
    fn rmse_hand_example() {
        let truth = vec![DVector::from_vec(vec![3.0, 4.0, 0.0, 0.0])];
        let run = RunResult {
            truth: truth.clone(),
            measurements: vec![DVector::zeros(2)],
            tracks: vec![FilterTrack {
                kind: FilterKind::Kf,
                estimates: vec![DVector::zeros(4)],
                sq_errors: vec![sq_position_error(&truth[0], &DVector::zeros(4))],
                diverged: false,
                psd_violations: 0,
            }],
            mixture: None,
            mixture_fallback: false,
        };
        let s = rmse_curve(&[run], FilterKind::Kf).unwrap();
        assert_eq!(s.rmse, vec![5.0]);
        assert!(rmse_curve(&[], FilterKind::Kf).unwrap().rmse.is_empty());
    }

    #[test]
    fn rmse_missing_filter_is_error() {
        let run = RunResult {
            truth: vec![DVector::zeros(4)],
            measurements: vec![DVector::zeros(2)],
            tracks: vec![],
            mixture: None,
            mixture_fallback: false,
        };
        assert!(rmse_curve(&[run], FilterKind::Tkf).is_err());
    }

    #[test]
    fn filter_names_round_trip() {
        for k in FilterKind::ALL {
            assert_eq!(k.name().parse::<FilterKind>().unwrap(), k);
        }
        assert!("hkf".parse::<FilterKind>().is_err());
    }
}
