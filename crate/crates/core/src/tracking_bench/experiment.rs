use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_cv_model, simulate_run, weight_demo::run_weight_demo, CvModelSpec, ErrorAccumulator,
    FilterKind, MeasurementNoise, RmseSeries, RunResult, WeightDemoSpec,
};
use crate::error::{Error, Result};
use crate::mixture_estimation::EmSettings;
use crate::noise_lab::{AlphaStableSpec, MixtureNoiseSpec, RandomStream};
use crate::robust_filters::TkfConfig;

/// Everything a Monte Carlo tracking benchmark needs besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub cv: CvModelSpec,
    pub noise: MeasurementNoise,
    pub filters: Vec<FilterKind>,
    pub tkf: TkfConfig,
    /// EM controls; the seed is replaced per run.
    pub em: EmSettings,
    pub runs: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            cv: CvModelSpec::default(),
            noise: MeasurementNoise::Mixture(MixtureNoiseSpec::isotropic(2, 0.9, 0.1, 10.0)),
            filters: FilterKind::ALL.to_vec(),
            tkf: TkfConfig::default(),
            em: EmSettings::default(),
            runs: 500,
        }
    }
}

impl BenchSettings {
    pub fn validate(&self) -> Result<()> {
        self.cv.validate()?;
        self.tkf.validate()?;
        self.em.validate()?;
        if self.runs < 1 {
            return Err(Error::invalid("runs", "must be at least 1"));
        }
        if self.filters.is_empty() {
            return Err(Error::invalid("filters", "select at least one filter"));
        }
        match &self.noise {
            MeasurementNoise::Mixture(spec) => spec.validate(),
            MeasurementNoise::AlphaStable(spec) => spec.validate(),
            MeasurementNoise::None => Ok(()),
        }
    }

    fn mixture(&self) -> Result<&MixtureNoiseSpec> {
        match &self.noise {
            MeasurementNoise::Mixture(spec) => Ok(spec),
            _ => Err(Error::invalid(
                "noise",
                "this sweep needs mixture measurement noise",
            )),
        }
    }
}

/// Experiment descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Protocol {
    WeightDemo(WeightDemoSpec),
    /// Truth, measurements and estimates of the first run.
    Trajectory(BenchSettings),
    RmseVsTime(BenchSettings),
    /// Time-averaged RMSE for each Gaussian proportion in `grid`.
    SweepGaussPct {
        base: BenchSettings,
        grid: Vec<f64>,
    },
    /// Time-averaged RMSE for each big-component standard deviation in `grid`.
    SweepStddev {
        base: BenchSettings,
        grid: Vec<f64>,
    },
    /// Time-averaged RMSE for each stability index in `grid`.
    AlphaStable {
        base: BenchSettings,
        grid: Vec<f64>,
        scale: f64,
    },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::WeightDemo(_) => "weight_demo",
            Protocol::Trajectory(_) => "trajectory",
            Protocol::RmseVsTime(_) => "rmse_vs_time",
            Protocol::SweepGaussPct { .. } => "sweep_gauss_pct",
            Protocol::SweepStddev { .. } => "sweep_stddev",
            Protocol::AlphaStable { .. } => "alpha_stable",
        }
    }
}

/// Column-labelled numeric table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: String,
    pub table: Table,
    /// RMSE curves per grid point (one entry for `rmse_vs_time`).
    pub series: Vec<Vec<RmseSeries>>,
    /// Diverged runs per filter, summed over grid points.
    pub divergences: BTreeMap<String, usize>,
    /// Steps whose posterior covariance failed the symmetry/PSD check.
    pub psd_violations: usize,
    /// Runs in which the mixture fit collapsed to a single Gaussian.
    pub mixture_fallbacks: usize,
}

impl ExperimentReport {
    fn new(protocol: &str, table: Table) -> Self {
        Self {
            protocol: protocol.to_string(),
            table,
            series: Vec::new(),
            divergences: BTreeMap::new(),
            psd_violations: 0,
            mixture_fallbacks: 0,
        }
    }

    fn absorb(&mut self, batch: &Batch) {
        for s in &batch.series {
            *self
                .divergences
                .entry(s.filter.name().to_string())
                .or_default() += s.n_diverged;
        }
        self.psd_violations += batch.psd_violations;
        self.mixture_fallbacks += batch.mixture_fallbacks;
        self.series.push(batch.series.clone());
    }
}

/// Aggregate of one Monte Carlo batch.
struct Batch {
    series: Vec<RmseSeries>,
    psd_violations: usize,
    mixture_fallbacks: usize,
    first: RunResult,
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))
}

fn run_batch(
    settings: &BenchSettings,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<Batch> {
    settings.validate()?;
    let model = build_cv_model(&settings.cv)?;
    let runs: Vec<Result<RunResult>> = pool.install(|| {
        (0..settings.runs)
            .into_par_iter()
            .map(|s| {
                simulate_run(
                    &model,
                    &settings.cv,
                    &settings.noise,
                    &settings.filters,
                    &settings.tkf,
                    &settings.em,
                    RandomStream::new(master_seed, s as u64),
                )
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let steps = settings.cv.steps;
    let mut series = Vec::with_capacity(settings.filters.len());
    let mut psd_violations = 0;
    for &kind in &settings.filters {
        let mut acc = ErrorAccumulator::new(steps);
        for run in &runs {
            let track = run.track(kind).expect("every run filters with every kind");
            acc.add(track)?;
            psd_violations += track.psd_violations;
        }
        series.push(acc.finish(kind));
    }
    let mixture_fallbacks = runs.iter().filter(|r| r.mixture_fallback).count();
    Ok(Batch {
        series,
        psd_violations,
        mixture_fallbacks,
        first: runs.into_iter().next().expect("runs >= 1"),
    })
}

fn rmse_columns(first: &str, filters: &[FilterKind]) -> Table {
    Table::new(
        std::iter::once(first.to_string()).chain(filters.iter().map(|f| format!("rmse_{f}"))),
    )
}

fn sweep<F>(
    name: &str,
    axis: &str,
    base: &BenchSettings,
    grid: &[f64],
    seed: u64,
    pool: &rayon::ThreadPool,
    mut configure: F,
) -> Result<ExperimentReport>
where
    F: FnMut(&BenchSettings, f64) -> Result<BenchSettings>,
{
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must contain at least one value"));
    }
    let mut report = ExperimentReport::new(name, rmse_columns(axis, &base.filters));
    for &g in grid {
        let settings = configure(base, g)?;
        let batch = run_batch(&settings, seed, pool)?;
        let mut row = vec![g];
        row.extend(batch.series.iter().map(RmseSeries::time_average));
        report.table.rows.push(row);
        report.absorb(&batch);
    }
    Ok(report)
}

/// Runs an experiment on `jobs` worker threads (0 picks the number of cores).
///
/// Run `s` draws all of its randomness from `RandomStream::new(master_seed, s)`
/// and results are merged by run index, so the output does not depend on `jobs`.
pub fn run_experiment(
    protocol: &Protocol,
    master_seed: u64,
    jobs: usize,
) -> Result<ExperimentReport> {
    let pool = thread_pool(jobs)?;
    match protocol {
        Protocol::WeightDemo(spec) => {
            let steps = run_weight_demo(spec, RandomStream::new(master_seed, 0))?;
            let mut table = Table::new(["step", "noise", "r", "a_p", "a_r", "truth", "estimate"]);
            for s in &steps {
                table.rows.push(vec![
                    s.step as f64,
                    s.noise,
                    s.r,
                    s.a_p,
                    s.a_r,
                    s.truth,
                    s.estimate,
                ]);
            }
            Ok(ExperimentReport::new(protocol.name(), table))
        }
        Protocol::RmseVsTime(settings) => {
            let batch = run_batch(settings, master_seed, &pool)?;
            let mut report =
                ExperimentReport::new(protocol.name(), rmse_columns("step", &settings.filters));
            for k in 0..settings.cv.steps {
                let mut row = vec![(k + 1) as f64];
                row.extend(batch.series.iter().map(|s| s.rmse[k]));
                report.table.rows.push(row);
            }
            report.absorb(&batch);
            Ok(report)
        }
        Protocol::Trajectory(settings) => {
            let single = BenchSettings {
                runs: 1,
                ..settings.clone()
            };
            let batch = run_batch(&single, master_seed, &pool)?;
            let mut cols = vec!["step", "true_x", "true_y", "meas_0", "meas_1"]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>();
            for f in &single.filters {
                cols.push(format!("{f}_x"));
                cols.push(format!("{f}_y"));
            }
            let mut report = ExperimentReport::new(protocol.name(), Table::new(cols));
            let run = &batch.first;
            for k in 0..run.truth.len() {
                let mut row = vec![
                    (k + 1) as f64,
                    run.truth[k][0],
                    run.truth[k][1],
                    run.measurements[k][0],
                    run.measurements[k][1],
                ];
                for t in &run.tracks {
                    row.push(t.estimates[k][0]);
                    row.push(t.estimates[k][1]);
                }
                report.table.rows.push(row);
            }
            report.absorb(&batch);
            Ok(report)
        }
        Protocol::SweepGaussPct { base, grid } => sweep(
            protocol.name(),
            "p_gauss",
            base,
            grid,
            master_seed,
            &pool,
            |b, p| {
                let mut spec = b.mixture()?.clone();
                spec.p_gauss = p;
                Ok(BenchSettings {
                    noise: MeasurementNoise::Mixture(spec),
                    ..b.clone()
                })
            },
        ),
        Protocol::SweepStddev { base, grid } => sweep(
            protocol.name(),
            "big_std",
            base,
            grid,
            master_seed,
            &pool,
            |b, sd| {
                if !(sd > 0.0) {
                    return Err(Error::invalid(
                        "grid",
                        format!("standard deviation must be positive, got {sd}"),
                    ));
                }
                let mut spec = b.mixture()?.clone();
                let m = spec.dim();
                spec.cov_big = DMatrix::from_diagonal_element(m, m, sd * sd);
                Ok(BenchSettings {
                    noise: MeasurementNoise::Mixture(spec),
                    ..b.clone()
                })
            },
        ),
        Protocol::AlphaStable { base, grid, scale } => sweep(
            protocol.name(),
            "alpha",
            base,
            grid,
            master_seed,
            &pool,
            |b, alpha| {
                Ok(BenchSettings {
                    noise: MeasurementNoise::AlphaStable(AlphaStableSpec::symmetric(alpha, *scale)),
                    ..b.clone()
                })
            },
        ),
    }
}
