//! Merges command-line flags, the optional JSON config file and defaults
//! into a fully resolved job. Flags win over the file, the file over defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use robust_kalman::noise_lab::MixtureNoiseSpec;
use robust_kalman::tracking_bench::{
    BenchSettings, FilterKind, MeasurementNoise, Protocol, WeightDemoSpec,
};
use robust_kalman::{EmSettings, TkfConfig};

use crate::args::{
    AlphaArgs, BenchArgs, Cli, Command, DemoArgs, EmArgs, GmmArgs, OutputFormat, SweepArgs,
};
use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;

/// A grid or filter list may be written as a string (same syntax as the flag)
/// or as a JSON array.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ListValue {
    Text(String),
    Numbers(Vec<f64>),
    Words(Vec<String>),
}

impl ListValue {
    fn into_text(self) -> String {
        match self {
            ListValue::Text(s) => s,
            ListValue::Numbers(v) => v
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
            ListValue::Words(v) => v.join(","),
        }
    }
}

/// Contents of `--config`. Keys mirror the long flag names.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub jobs: Option<usize>,
    pub quiet: Option<bool>,
    pub runs: Option<usize>,
    pub steps: Option<usize>,
    pub filters: Option<ListValue>,
    pub p_gauss: Option<f64>,
    pub small_var: Option<f64>,
    pub big_var: Option<f64>,
    pub dt: Option<f64>,
    pub n_iters: Option<usize>,
    pub omega: Option<f64>,
    pub nu: Option<f64>,
    pub tau: Option<f64>,
    pub observe_y_velocity: Option<bool>,
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub grid: Option<ListValue>,
    pub scale: Option<f64>,
    pub gauss_steps: Option<usize>,
    pub impulse_steps: Option<usize>,
    pub gauss_std: Option<f64>,
    pub impulse_std: Option<f64>,
    pub process_var: Option<f64>,
    pub window: Option<usize>,
    pub input: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config `{}`: {e}", path.display())))
    }
}

/// What to run.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Experiment(Protocol),
    GmmFit { input: PathBuf, em: EmSettings },
}

/// Fully resolved invocation.
#[derive(Debug, Clone)]
pub struct Job {
    pub subcommand: &'static str,
    pub action: Action,
    pub seed: u64,
    pub jobs: usize,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

/// Parameters echoed into JSON metadata.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Parameters {
    Experiment(Protocol),
    GmmFit { input: PathBuf, em: EmSettings },
}

impl Job {
    pub fn parameters(&self) -> Parameters {
        match &self.action {
            Action::Experiment(p) => Parameters::Experiment(p.clone()),
            Action::GmmFit { input, em } => Parameters::GmmFit {
                input: input.clone(),
                em: *em,
            },
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |tok: &str| usage(format!("invalid grid value `{tok}` in `{text}`"));
    let parse = |tok: &str| tok.trim().parse::<f64>().map_err(|_| bad(tok));
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
            if !(step > 0.0) || !(stop >= start) || !step.is_finite() {
                return Err(usage(format!(
                    "grid `{text}` needs start <= stop and a positive step"
                )));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if count > 100_000 {
                return Err(usage(format!("grid `{text}` has too many points")));
            }
            // Rounding keeps 0.1:0.9:0.1 from printing 0.30000000000000004.
            (0..count)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        [list] => list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(parse)
            .collect::<Result<Vec<_>, _>>()?,
        _ => {
            return Err(usage(format!(
                "grid `{text}` must be start:stop:step or a comma list"
            )))
        }
    };
    if grid.is_empty() {
        return Err(usage("grid must contain at least one value"));
    }
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(usage(format!("grid `{text}` contains a non-finite value")));
    }
    Ok(grid)
}

pub fn parse_filters(text: &str) -> Result<Vec<FilterKind>, CliError> {
    let mut out = Vec::new();
    for tok in text.split(',').filter(|t| !t.trim().is_empty()) {
        let kind: FilterKind = tok.parse().map_err(|_| {
            usage(format!(
                "unknown filter `{}` (expected kf, tkf or tgkf)",
                tok.trim()
            ))
        })?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(usage("--filters must name at least one of kf, tkf, tgkf"));
    }
    Ok(out)
}

fn em_settings(args: &EmArgs, cfg: &ConfigFile, seed: u64) -> EmSettings {
    let d = EmSettings::default();
    EmSettings {
        max_iters: args.max_iters.or(cfg.max_iters).unwrap_or(d.max_iters),
        tol: args.tol.or(cfg.tol).unwrap_or(d.tol),
        n_restarts: args.restarts.or(cfg.restarts).unwrap_or(d.n_restarts),
        seed,
    }
}

fn bench_settings(
    args: &BenchArgs,
    cfg: &ConfigFile,
    seed: u64,
) -> Result<BenchSettings, CliError> {
    let d = BenchSettings::default();
    let mut cv = d.cv.clone();
    cv.steps = args.steps.or(cfg.steps).unwrap_or(cv.steps);
    cv.dt = args.dt.or(cfg.dt).unwrap_or(cv.dt);
    cv.observe_y_velocity = args.observe_y_velocity || cfg.observe_y_velocity.unwrap_or(false);

    let filters = match args
        .filters
        .clone()
        .or_else(|| cfg.filters.clone().map(ListValue::into_text))
    {
        Some(text) => parse_filters(&text)?,
        None => d.filters.clone(),
    };
    let td = TkfConfig::default();
    let tkf = TkfConfig {
        omega: args.omega.or(cfg.omega).unwrap_or(td.omega),
        nu: args.nu.or(cfg.nu).unwrap_or(td.nu),
        tau: args.tau.or(cfg.tau).unwrap_or(td.tau),
        n_iters: args.n_iters.or(cfg.n_iters).unwrap_or(td.n_iters),
    };
    let noise = MeasurementNoise::Mixture(MixtureNoiseSpec::isotropic(
        2,
        args.p_gauss.or(cfg.p_gauss).unwrap_or(0.9),
        args.small_var.or(cfg.small_var).unwrap_or(0.1),
        args.big_var.or(cfg.big_var).unwrap_or(10.0),
    ));
    let settings = BenchSettings {
        cv,
        noise,
        filters,
        tkf,
        em: em_settings(&args.em, cfg, seed),
        runs: args.runs.or(cfg.runs).unwrap_or(d.runs),
    };
    settings.validate()?;
    Ok(settings)
}

fn grid_of(arg: &Option<String>, cfg: &ConfigFile, default: &str) -> Result<Vec<f64>, CliError> {
    let text = arg
        .clone()
        .or_else(|| cfg.grid.clone().map(ListValue::into_text))
        .unwrap_or_else(|| default.to_string());
    parse_grid(&text)
}

fn demo_spec(args: &DemoArgs, cfg: &ConfigFile) -> Result<WeightDemoSpec, CliError> {
    let d = WeightDemoSpec::default();
    let spec = WeightDemoSpec {
        gauss_steps: args
            .gauss_steps
            .or(cfg.gauss_steps)
            .unwrap_or(d.gauss_steps),
        impulse_steps: args
            .impulse_steps
            .or(cfg.impulse_steps)
            .unwrap_or(d.impulse_steps),
        gauss_std: args.gauss_std.or(cfg.gauss_std).unwrap_or(d.gauss_std),
        impulse_std: args
            .impulse_std
            .or(cfg.impulse_std)
            .unwrap_or(d.impulse_std),
        process_var: args
            .process_var
            .or(cfg.process_var)
            .unwrap_or(d.process_var),
        window: args.window.or(cfg.window).unwrap_or(d.window),
    };
    spec.validate()?;
    Ok(spec)
}

fn sweep_parts(
    args: &SweepArgs,
    cfg: &ConfigFile,
    seed: u64,
    default_grid: &str,
) -> Result<(BenchSettings, Vec<f64>), CliError> {
    Ok((
        bench_settings(&args.bench, cfg, seed)?,
        grid_of(&args.grid, cfg, default_grid)?,
    ))
}

fn alpha_protocol(args: &AlphaArgs, cfg: &ConfigFile, seed: u64) -> Result<Protocol, CliError> {
    let base = bench_settings(&args.bench, cfg, seed)?;
    let grid = grid_of(&args.grid, cfg, "1.2,1.4,1.6,1.8,2.0")?;
    let scale = args.scale.or(cfg.scale).unwrap_or(0.5);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(usage(format!("--scale must be positive, got {scale}")));
    }
    if let Some(bad) = grid.iter().find(|a| !(**a > 0.0 && **a <= 2.0)) {
        return Err(usage(format!(
            "stability index must lie in (0, 2], got {bad}"
        )));
    }
    Ok(Protocol::AlphaStable { base, grid, scale })
}

fn gmm_action(args: &GmmArgs, cfg: &ConfigFile, seed: u64) -> Result<Action, CliError> {
    let input = args
        .input
        .clone()
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| usage("gmm-fit needs --input <PATH>"))?;
    let em = em_settings(&args.em, cfg, seed);
    em.validate()?;
    Ok(Action::GmmFit { input, em })
}

/// Resolves parsed flags and the config file into a job.
pub fn resolve(cli: &Cli) -> Result<Job, CliError> {
    let cfg = match &cli.global.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let g = &cli.global;
    let seed = g.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let jobs = g.jobs.or(cfg.jobs).unwrap_or(0);
    let action = match &cli.command {
        Command::WeightDemo(a) => Action::Experiment(Protocol::WeightDemo(demo_spec(a, &cfg)?)),
        Command::Trajectory(a) => {
            Action::Experiment(Protocol::Trajectory(bench_settings(a, &cfg, seed)?))
        }
        Command::Track(a) => {
            Action::Experiment(Protocol::RmseVsTime(bench_settings(a, &cfg, seed)?))
        }
        Command::SweepGaussPct(a) => {
            let (base, grid) = sweep_parts(a, &cfg, seed, "0.1:0.9:0.1")?;
            if let Some(bad) = grid.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
                return Err(usage(format!(
                    "Gaussian proportion must lie in [0, 1], got {bad}"
                )));
            }
            Action::Experiment(Protocol::SweepGaussPct { base, grid })
        }
        Command::SweepStddev(a) => {
            let (base, grid) = sweep_parts(a, &cfg, seed, "1,2,4,6,8,10")?;
            if let Some(bad) = grid.iter().find(|s| !(**s > 0.0)) {
                return Err(usage(format!(
                    "standard deviation must be positive, got {bad}"
                )));
            }
            Action::Experiment(Protocol::SweepStddev { base, grid })
        }
        Command::AlphaStable(a) => Action::Experiment(alpha_protocol(a, &cfg, seed)?),
        Command::GmmFit(a) => gmm_action(a, &cfg, seed)?,
    };
    let default_format = match action {
        Action::GmmFit { .. } => OutputFormat::Json,
        Action::Experiment(_) => OutputFormat::Csv,
    };
    let format = g.format.or(cfg.format).unwrap_or(default_format);
    if matches!(action, Action::GmmFit { .. }) && format == OutputFormat::Csv {
        return Err(usage("gmm-fit writes JSON only; drop `--format csv`"));
    }
    Ok(Job {
        subcommand: cli.command.name(),
        action,
        seed,
        jobs,
        format,
        out: g.out.clone().or(cfg.out),
        quiet: g.quiet || cfg.quiet.unwrap_or(false),
    })
}
