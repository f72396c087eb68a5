//! Experiment runner behind the `fecap-readsim` command.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;

pub use config::{RunConfig, Verb};
pub use error::CliError;

#[derive(Debug, Clone, Parser)]
#[command(name = "fecap-readsim", version, about = "FeCap capacitive-read macro experiments")]
pub struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    pub verb: Verb,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for Monte Carlo work; 0 picks the core count.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Loads, validates and applies command-line overrides.
pub fn prepare(args: &Args) -> Result<RunConfig, CliError> {
    let mut config = config::load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.resolve_experiment(args.verb)?;
    config::validate(&config)?;
    Ok(config)
}

/// Runs a prepared configuration on a pool of `threads` workers and writes
/// the results under `config.output_dir`.
pub fn execute(config: &RunConfig, verb: Verb, threads: usize) -> Result<RunOutcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))?;
    let started = Instant::now();
    let result = pool.install(|| experiments::run(config))?;
    let dir: &Path = &config.output_dir;
    let mut files = output::write_artifacts(dir, &result.artifacts)?;
    let manifest = output::Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        verb: verb.name(),
        master_seed: config.master_seed,
        threads: pool.current_num_threads(),
        temperature_c: config.temperature_c,
        wall_time_s: started.elapsed().as_secs_f64(),
        files: result.artifacts.iter().map(output::Artifact::file).collect(),
        warnings: &result.warnings,
        summary: &result.summary,
        config,
    };
    files.push(output::write_manifest(dir, &manifest)?);
    Ok(RunOutcome {
        output_dir: dir.to_path_buf(),
        files,
        warnings: result.warnings,
    })
}

pub fn run(args: &Args) -> Result<RunOutcome, CliError> {
    let config = prepare(args)?;
    execute(&config, args.verb, args.threads)
}
