use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "robust-kalman",
    version,
    about = "Robust Kalman filtering benchmarks (KF, TKF, TGKF)"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// Master random seed [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format [default: csv, json for gmm-fit]
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// JSON config file whose keys mirror the flag names
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for Monte Carlo runs [default: available cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Suppress the summary on standard error
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kalman weights a_p/a_r under Gaussian then impulsive noise
    WeightDemo(DemoArgs),
    /// Truth, measurements and estimates of a single run
    Trajectory(BenchArgs),
    /// Per-step Monte Carlo RMSE of each filter
    Track(BenchArgs),
    /// Time-averaged RMSE versus the Gaussian proportion of the noise
    SweepGaussPct(SweepArgs),
    /// Time-averaged RMSE versus the standard deviation of the impulsive component
    SweepStddev(SweepArgs),
    /// Time-averaged RMSE under symmetric alpha-stable noise
    AlphaStable(AlphaArgs),
    /// Fit a two-component Gaussian mixture to a noise trace
    GmmFit(GmmArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::WeightDemo(_) => "weight-demo",
            Command::Trajectory(_) => "trajectory",
            Command::Track(_) => "track",
            Command::SweepGaussPct(_) => "sweep-gauss-pct",
            Command::SweepStddev(_) => "sweep-stddev",
            Command::AlphaStable(_) => "alpha-stable",
            Command::GmmFit(_) => "gmm-fit",
        }
    }
}

#[derive(Debug, Args, Default, Clone)]
pub struct EmArgs {
    /// EM restarts, best kept by log-likelihood [default: 5]
    #[arg(long)]
    pub restarts: Option<usize>,
    /// EM iteration cap per restart [default: 200]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative log-likelihood change that stops EM [default: 1e-8]
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct BenchArgs {
    /// Monte Carlo runs [default: 500]
    #[arg(long)]
    pub runs: Option<usize>,
    /// Time steps per run [default: 100]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated filters out of kf,tkf,tgkf [default: kf,tkf,tgkf]
    #[arg(long)]
    pub filters: Option<String>,
    /// Probability of the small-covariance noise component [default: 0.9]
    #[arg(long)]
    pub p_gauss: Option<f64>,
    /// Variance of the small component, position units² [default: 0.1]
    #[arg(long)]
    pub small_var: Option<f64>,
    /// Variance of the impulsive component, position units² [default: 10]
    #[arg(long)]
    pub big_var: Option<f64>,
    /// Sampling interval, seconds [default: 1]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Fixed-point iterations per TKF/TGKF step [default: 10]
    #[arg(long)]
    pub n_iters: Option<usize>,
    /// Degrees of freedom of the predicted state [default: 5]
    #[arg(long)]
    pub omega: Option<f64>,
    /// Degrees of freedom of the likelihood [default: 5]
    #[arg(long)]
    pub nu: Option<f64>,
    /// Inverse-Wishart tuning parameter [default: 5]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Observe X position and Y velocity instead of both positions
    #[arg(long)]
    pub observe_y_velocity: bool,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Args, Default, Clone)]
pub struct SweepArgs {
    /// Grid as start:stop:step or a comma list [default: 0.1:0.9:0.1 for sweep-gauss-pct, 1,2,4,6,8,10 for sweep-stddev]
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub bench: BenchArgs,
}

#[derive(Debug, Args, Default, Clone)]
pub struct AlphaArgs {
    /// Stability indices as start:stop:step or a comma list [default: 1.2,1.4,1.6,1.8,2.0]
    #[arg(long)]
    pub grid: Option<String>,
    /// Scale of the stable noise per coordinate, position units [default: 0.5]
    #[arg(long)]
    pub scale: Option<f64>,
    #[command(flatten)]
    pub bench: BenchArgs,
}

#[derive(Debug, Args, Default, Clone)]
pub struct DemoArgs {
    /// Steps with Gaussian measurement noise [default: 100]
    #[arg(long)]
    pub gauss_steps: Option<usize>,
    /// Steps with impulsive measurement noise [default: 100]
    #[arg(long)]
    pub impulse_steps: Option<usize>,
    /// Standard deviation of the Gaussian segment [default: 1]
    #[arg(long)]
    pub gauss_std: Option<f64>,
    /// Standard deviation of the impulsive segment [default: 10]
    #[arg(long)]
    pub impulse_std: Option<f64>,
    /// Process-noise variance of the drifting state [default: 0.5]
    #[arg(long)]
    pub process_var: Option<f64>,
    /// Recent noise samples whose mean square sets R at each step [default: 10]
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct GmmArgs {
    /// CSV noise trace, one vector per row; `#` lines are comments
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub em: EmArgs,
}
