//! `pnp-steric <mode> --config <file> [--out <dir>] [--sweep key=lo:hi:n] [--jobs N]`

mod config;
mod modes;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use config::{RunConfig, Sweep};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Numerical(#[from] pnp_steric::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    SolveAlgebraic,
    Classify,
    Branches,
    Stationary,
    Evolve,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SolveAlgebraic => "algebraic",
            Mode::Classify => "classify",
            Mode::Branches => "branches",
            Mode::Stationary => "stationary",
            Mode::Evolve => "evolve",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pnp-steric",
    version,
    about = "Stationary and transient PNP runs with steric cross-diffusion"
)]
struct Cli {
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Repeat the run over `n` evenly spaced values of a numeric key.
    #[arg(long, value_name = "key=lo:hi:n")]
    sweep: Option<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(&cli.config)?;
    prepare_dir(&cli.out)?;
    let Some(arg) = &cli.sweep else {
        return modes::dispatch(cli.mode, &cfg, &cli.out);
    };
    let sweep = Sweep::parse(arg)?;
    let points: Vec<(usize, f64, RunConfig)> = sweep
        .values()
        .into_iter()
        .enumerate()
        .map(|(k, x)| Ok((k, x, cfg.with_value(&sweep.key, x)?)))
        .collect::<Result<_, CliError>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<(), CliError>> = pool.install(|| {
        points
            .par_iter()
            .map(|(k, _, c)| {
                let dir = cli.out.join(format!("point{k:03}"));
                prepare_dir(&dir)?;
                modes::dispatch(cli.mode, c, &dir)
            })
            .collect()
    });
    let mut index = format!("index,{},status\n", sweep.key);
    for ((k, x, _), outcome) in points.iter().zip(&outcomes) {
        let status = match outcome {
            Ok(()) => "ok".to_string(),
            Err(e) => e.to_string().replace(',', ";"),
        };
        index.push_str(&format!(
            "{k},{},{status}\n",
            pnp_steric::output::fmt_f64(*x)
        ));
    }
    let path = cli.out.join("sweep.csv");
    std::fs::write(&path, index).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    match outcomes.into_iter().find_map(Result::err) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
