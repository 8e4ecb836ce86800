//! `mixspec`: simulate dependent processes, compute Gram spectra, solve the
//! limiting law and run experiment campaigns from JSON configs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand};
use log::{info, warn};
use mixspec_core::experiments::{self, ExperimentConfig, ExperimentKind};
use mixspec_core::io::write_bundle;
use mixspec_core::lsd::{
    density_csv, density_from_stieltjes, inversion_grid, lsd_cdf, support_upper_bound,
};
use mixspec_core::{
    autocovariance_closed_form, build_an, build_bn, build_bn_from_values, build_gn, sample_trajectory,
    spectral_density, Complex64, EnsembleConfig, EnsembleKind, Error, GramSpectrum, LsdSolver,
};
use serde::de::DeserializeOwned;

use crate::config::{LsdConfig, SimulateConfig, SpectrumConfig};

#[derive(Debug, Parser)]
#[command(name = "mixspec", version, about = "Spectra of Gram matrices built from beta-mixing processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MIXSPEC_THREADS")]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a trajectory and write `trajectory.csv`.
    Simulate(Seeded),
    /// Eigenvalues of one `bn`, `an` or `gn` matrix, written to `eigenvalues.csv`.
    Spectrum(Sized),
    /// Solve the limit equation; writes `density.csv`, `cdf.csv` and `stieltjes.csv`.
    Lsd(Common),
    /// Compare the single-trajectory Gram matrix with its Gaussian counterpart.
    Universality(Sized),
    /// Replicate spread of the Stieltjes transform against the concentration envelope.
    Concentrate(Sized),
    /// Walk the block-approximation ladder.
    Blocks(Sized),
    /// Kolmogorov distance between the ESD and the solved limit law.
    Convergence(Sized),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    config: PathBuf,

    /// Output directory (overrides `output` in the config).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Seeded {
    #[command(flatten)]
    common: Common,

    /// Seed (overrides the config seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Sized {
    #[command(flatten)]
    seeded: Seeded,

    /// Matrix sizes as `NxN,...` (overrides the config).
    #[arg(long)]
    sizes: Option<Sizes>,
}

#[derive(Debug, Clone)]
struct Sizes(Vec<(usize, usize)>);

impl FromStr for Sizes {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|pair| {
                let (rows, cols) = pair
                    .trim()
                    .split_once(['x', 'X'])
                    .ok_or_else(|| format!("expected NxN, got {pair:?}"))?;
                let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{pair:?}: {e}"));
                Ok((parse(rows)?, parse(cols)?))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Sizes)
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    ReadConfig(PathBuf, std::io::Error),
    ParseConfig(PathBuf, serde_json::Error),
    InvalidConfig(PathBuf, Error),
    Compute(Error),
    Write(PathBuf, Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Compute(Error::Solver { .. }) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::ReadConfig(path, e) => write!(f, "cannot read config {}: {e}", path.display()),
            Failure::ParseConfig(path, e) => write!(f, "malformed config {}: {e}", path.display()),
            Failure::InvalidConfig(path, e) => write!(f, "invalid config {}: {e}", path.display()),
            Failure::Compute(e @ Error::Solver { .. }) => write!(f, "solver failure: {e}"),
            Failure::Compute(e) => write!(f, "computation failed: {e}"),
            Failure::Write(dir, e) => write!(f, "cannot write outputs to {}: {e}", dir.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::ReadConfig(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| Failure::ParseConfig(path.to_path_buf(), e))
}

fn output_dir(flag: &Option<PathBuf>, config: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| Failure::Usage("no output directory: pass --out or set \"output\" in the config".into()))
}

fn write(dir: &Path, files: Vec<(String, Vec<u8>)>) -> Result<(), Failure> {
    write_bundle(dir, &files).map_err(|e| Failure::Write(dir.to_path_buf(), e))?;
    info!("wrote {} file(s) to {}", files.len(), dir.display());
    Ok(())
}

fn simulate(args: &Seeded) -> Result<(), Failure> {
    let path = &args.common.config;
    let mut cfg: SimulateConfig = load(path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::InvalidConfig(path.clone(), e))?;
    let dir = output_dir(&args.common.out, &cfg.output)?;
    let traj = sample_trajectory(&cfg.spec, cfg.length, cfg.seed)?;
    write(&dir, vec![("trajectory.csv".into(), traj.to_csv().into_bytes())])
}

fn spectrum(args: &Sized) -> Result<(), Failure> {
    let path = &args.seeded.common.config;
    let mut cfg: SpectrumConfig = load(path)?;
    if let Some(seed) = args.seeded.seed {
        if cfg.trajectory.is_some() {
            warn!("--seed has no effect on an explicit trajectory");
        }
        cfg.seed = seed;
    }
    if let Some(Sizes(sizes)) = &args.sizes {
        let [(rows, cols)] = sizes[..] else {
            return Err(Failure::Usage("spectrum takes exactly one size".into()));
        };
        cfg.rows = rows;
        cfg.cols = cols;
    }
    cfg.validate().map_err(|e| Failure::InvalidConfig(path.clone(), e))?;
    let dir = output_dir(&args.seeded.common.out, &cfg.output)?;
    let ens = EnsembleConfig::new(cfg.rows, cfg.cols)?;
    let gram = match (&cfg.spec, &cfg.trajectory, cfg.ensemble) {
        (None, Some(values), _) => build_bn_from_values(values, &ens)?.1,
        (Some(spec), _, EnsembleKind::Bn) => build_bn(&sample_trajectory(spec, ens.entries(), cfg.seed)?, &ens)?.1,
        (Some(spec), _, EnsembleKind::An) => build_an(spec, &ens, cfg.seed)?.1,
        (Some(spec), _, EnsembleKind::Gn) => {
            let gamma = autocovariance_closed_form(spec, ens.rows - 1)?;
            build_gn(&gamma, &ens, cfg.seed)?.1
        }
        _ => unreachable!("rejected by validation"),
    };
    let spectrum = GramSpectrum::from_gram(&gram, ens.cols, cfg.ensemble)?;
    write(&dir, vec![("eigenvalues.csv".into(), spectrum.to_csv().into_bytes())])
}

fn lsd(args: &Common) -> Result<(), Failure> {
    let path = &args.config;
    let cfg: LsdConfig = load(path)?;
    cfg.validate().map_err(|e| Failure::InvalidConfig(path.clone(), e))?;
    let dir = output_dir(&args.out, &cfg.output)?;
    let f = spectral_density(&cfg.autocovariance()?)?;
    let solver = LsdSolver::new(&f, cfg.c, cfg.solver)?;
    let mut files = Vec::new();
    if !cfg.z_grid.is_empty() {
        let zs: Vec<Complex64> = cfg.z_grid.iter().map(|z| Complex64::new(z[0], z[1])).collect();
        files.push(("stieltjes.csv".to_string(), solver.solve_grid(&zs)?.to_csv().into_bytes()));
    }
    let v = cfg.density.height;
    let x_max = cfg.density.x_max.unwrap_or_else(|| support_upper_bound(&solver));
    let x_min = cfg.density.x_min.unwrap_or(-0.1 * x_max.abs().max(1.0));
    if !(x_min < x_max) {
        return Err(Failure::InvalidConfig(
            path.clone(),
            Error::Parameter(format!("empty density range [{x_min}, {x_max}]")),
        ));
    }
    let density = density_from_stieltjes(&solver, &inversion_grid(x_min, x_max, v), v)?;
    files.push(("density.csv".into(), density_csv(&density).into_bytes()));
    files.push(("cdf.csv".into(), lsd_cdf(&solver, v)?.to_csv().into_bytes()));
    write(&dir, files)
}

fn experiment(kind: ExperimentKind, args: &Sized) -> Result<(), Failure> {
    let path = &args.seeded.common.config;
    let mut cfg: ExperimentConfig = load(path)?;
    if let Some(seed) = args.seeded.seed {
        cfg.base_seed = seed;
    }
    if let Some(Sizes(sizes)) = &args.sizes {
        cfg.sizes = sizes.clone();
    }
    cfg.validate().map_err(|e| Failure::InvalidConfig(path.clone(), e))?;
    let dir = output_dir(&args.seeded.common.out, &cfg.output)?;
    let report = experiments::run(kind, &cfg)?;
    for notice in &report.notices {
        warn!("{notice}");
    }
    for (check, ok) in &report.checks {
        info!("check {check}: {}", if *ok { "holds" } else { "fails" });
    }
    write(&dir, report.artifacts())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Spectrum(args) => spectrum(args),
        Command::Lsd(args) => lsd(args),
        Command::Universality(args) => experiment(ExperimentKind::Universality, args),
        Command::Concentrate(args) => experiment(ExperimentKind::Concentration, args),
        Command::Blocks(args) => experiment(ExperimentKind::ApproximationChain, args),
        Command::Convergence(args) => experiment(ExperimentKind::LsdConvergence, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(threads) = cli.threads.filter(|&t| t > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            warn!("could not size the thread pool: {e}");
        }
    }

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("mixspec: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
