#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod config;
mod emit;
mod error;
mod input;

use std::collections::BTreeMap;
use std::process::ExitCode;

use clap::{ColorChoice, CommandFactory, FromArgMatches};
use serde::Serialize;

use robust_kalman::mixture_estimation::{sample_covariance, sample_mean};
use robust_kalman::tracking_bench::{run_experiment, ExperimentReport};
use robust_kalman::{
    effective_covariance, fit_gmm2, tg_factor, Error, NoiseMixtureEstimate, VERSION,
};

use args::{Cli, OutputFormat};
use config::{Action, Job, Parameters};
use error::CliError;

#[derive(Serialize)]
struct Metadata {
    subcommand: &'static str,
    parameters: Parameters,
    seed: u64,
    version: &'static str,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    divergences: &'a BTreeMap<String, usize>,
    psd_violations: usize,
    mixture_fallbacks: usize,
}

#[derive(Serialize)]
struct ExperimentDoc<'a> {
    metadata: Metadata,
    columns: &'a [String],
    rows: &'a [Vec<f64>],
    diagnostics: Diagnostics<'a>,
}

#[derive(Serialize)]
struct GmmDoc {
    metadata: Metadata,
    n_samples: usize,
    /// True when EM collapsed and a single Gaussian was used instead.
    degenerate: bool,
    weight_s: f64,
    weight_b: f64,
    mean_s: Vec<f64>,
    mean_b: Vec<f64>,
    cov_s: Vec<Vec<f64>>,
    cov_b: Vec<Vec<f64>>,
    tg: f64,
    r_effective: Vec<Vec<f64>>,
    log_likelihood: f64,
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn metadata(job: &Job) -> Metadata {
    Metadata {
        subcommand: job.subcommand,
        parameters: job.parameters(),
        seed: job.seed,
        version: VERSION,
    }
}

fn summarize(report: &ExperimentReport) {
    if let [series] = report.series.as_slice() {
        for s in series {
            eprintln!(
                "{:>5}: time-averaged RMSE {:.4}",
                s.filter.name(),
                s.time_average()
            );
        }
    } else if !report.series.is_empty() {
        eprintln!("{} grid points", report.series.len());
    }
    let diverged: usize = report.divergences.values().sum();
    if diverged > 0 {
        eprintln!("warning: diverged runs {:?}", report.divergences);
    }
    if report.psd_violations > 0 {
        eprintln!(
            "warning: {} posterior covariances failed the PSD check",
            report.psd_violations
        );
    }
    if report.mixture_fallbacks > 0 {
        eprintln!(
            "note: {} runs fell back to a single-Gaussian noise fit",
            report.mixture_fallbacks
        );
    }
}

fn run_protocol(
    job: &Job,
    protocol: &robust_kalman::tracking_bench::Protocol,
) -> Result<Vec<u8>, CliError> {
    let report = run_experiment(protocol, job.seed, job.jobs)?;
    if !job.quiet {
        summarize(&report);
    }
    match job.format {
        OutputFormat::Csv => emit::table_csv(&report.table),
        OutputFormat::Json => emit::json_bytes(&ExperimentDoc {
            metadata: metadata(job),
            columns: &report.table.columns,
            rows: &report.table.rows,
            diagnostics: Diagnostics {
                divergences: &report.divergences,
                psd_violations: report.psd_violations,
                mixture_fallbacks: report.mixture_fallbacks,
            },
        }),
    }
}

fn run_gmm(
    job: &Job,
    input: &std::path::Path,
    em: &robust_kalman::EmSettings,
) -> Result<Vec<u8>, CliError> {
    let samples = input::read_samples(input)?;
    let (estimate, degenerate) = match fit_gmm2(&samples, em) {
        Ok(est) => (est, false),
        Err(Error::DegenerateFit) => {
            let mean = sample_mean(&samples);
            let cov = sample_covariance(&samples);
            (NoiseMixtureEstimate::single(mean, cov, f64::NAN), true)
        }
        Err(e) => return Err(e.into()),
    };
    let tg = tg_factor(&estimate)?;
    let r_eff = effective_covariance(&estimate)?;
    if !job.quiet {
        eprintln!(
            "weight_s {:.4}, TG {:.6}{}",
            estimate.weight_s,
            tg,
            if degenerate {
                " (single-Gaussian fallback)"
            } else {
                ""
            }
        );
    }
    emit::json_bytes(&GmmDoc {
        metadata: metadata(job),
        n_samples: samples.len(),
        degenerate,
        weight_s: estimate.weight_s,
        weight_b: estimate.weight_b,
        mean_s: estimate.mean_s.iter().copied().collect(),
        mean_b: estimate.mean_b.iter().copied().collect(),
        cov_s: rows_of(&estimate.cov_s),
        cov_b: rows_of(&estimate.cov_b),
        tg,
        r_effective: rows_of(&r_eff),
        log_likelihood: estimate.log_likelihood,
    })
}

fn execute(job: &Job) -> Result<(), CliError> {
    let bytes = match &job.action {
        Action::Experiment(protocol) => run_protocol(job, protocol)?,
        Action::GmmFit { input, em } => run_gmm(job, input, em)?,
    };
    emit::write_output(job.out.as_deref(), &bytes)
}

fn parse_cli() -> Result<Cli, clap::Error> {
    let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
    let cmd = Cli::command().color(if no_color {
        ColorChoice::Never
    } else {
        ColorChoice::Auto
    });
    let matches = cmd.try_get_matches()?;
    Cli::from_arg_matches(&matches)
}

fn main() -> ExitCode {
    let cli = match parse_cli() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            let rendered = e.to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("invalid arguments"));
            eprintln!("For more information, try '--help'.");
            return ExitCode::from(1);
        }
    };
    match config::resolve(&cli).and_then(|job| execute(&job)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
