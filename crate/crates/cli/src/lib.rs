//! Command-line front end: configuration, the four subcommands, and result
//! files that are identical for identical manifests.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "intermittency-lab", version, about = "Numerical experiments on an intermittent interval map")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config, or a JSON run manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "INTERMITTENCY_LAB_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample orbits.
    Orbit,
    /// Invariant density by Ulam's method.
    Density,
    /// First-return diagnostics and correlation decay.
    Renewal,
    /// Hit statistics and the pair-sum ratio for a target schedule.
    Bc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::Density => "density",
            Command::Renewal => "renewal",
            Command::Bc => "bc",
        }
    }
}

/// Config file (or defaults) with flag overrides applied, validated.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(alpha) = cli.alpha {
        config.alpha = alpha;
    }
    config.validate()?;
    Ok(config)
}

/// Runs the command and returns the one-line summary.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let config = resolve_config(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let out = cli.out.as_path();
    pool.install(|| {
        commands::prepare(out, cli.command.name(), &config)?;
        match cli.command {
            Command::Orbit => commands::orbit(&config, out),
            Command::Density => commands::density(&config, out),
            Command::Renewal => commands::renewal(&config, out),
            Command::Bc => commands::bc(&config, out),
        }
    })
}
