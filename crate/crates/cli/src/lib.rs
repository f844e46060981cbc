//! Command-line driver for the identification toolkit: synthetic data, fits, clever
//! sections, error analysis and multistage compression curves.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod noise;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{Analysis, EngineOutcome, FitReport, Truth};
pub use config::{Config, Engine};
pub use error::{CliError, Result};
pub use noise::{NoiseKind, NoiseSpec};

#[derive(Debug, Parser)]
#[command(name = "splitfit", version, about = "Hierarchical least-squares identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic data (t, value) and a truth sidecar.
    Simulate(Common),
    /// Fit data with the selected engine and write a report.
    Fit(Common),
    /// Write real-life and follower clever sections per grid axis.
    Sections(Common),
    /// Write the noise decomposition, error domains and band checks.
    Analyze(Common),
    /// Resolve each stage at the long-stage value of the grid parameter.
    CompressionCurve(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Data CSV; repeat once per stage for compression-curve.
    #[arg(long)]
    pub data: Vec<PathBuf>,
    /// Output directory (defaults to output.directory, then the current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub engine: Option<Engine>,
    /// Overrides the noise seed (simulate) or the solver seed (fit).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fit report to analyse (defaults to fit_report.json in the output directory).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl Common {
    fn out_dir(&self, config: &Config) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.output.directory.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn single_data(&self, config: &Config) -> Result<splitfit_core::Data> {
        match self.data.as_slice() {
            [path] => io::read_series(path, config.model.time_unit),
            [] => Err(CliError::Config("--data is required".into())),
            _ => Err(CliError::Config("this command takes a single --data file".into())),
        }
    }

    fn report(&self, out: &Path) -> Result<FitReport> {
        let path = self.report.clone().unwrap_or_else(|| out.join(commands::REPORT_FILE));
        if !path.exists() {
            return Err(CliError::Data(format!("no fit report at {}", path.display())));
        }
        io::read_json(&path)
    }
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(c) => {
            let config = Config::load(&c.config)?;
            commands::simulate(&config, c.seed, &c.out_dir(&config))?;
        }
        Command::Fit(c) => {
            let config = Config::load(&c.config)?;
            let data = c.single_data(&config)?;
            let engine = c.engine.or(config.solver.engine).unwrap_or(Engine::Grid);
            commands::fit(&config, &data, engine, c.seed, &c.out_dir(&config))?;
        }
        Command::Sections(c) => {
            let config = Config::load(&c.config)?;
            let data = c.single_data(&config)?;
            let out = c.out_dir(&config);
            commands::sections(&config, &data, &c.report(&out)?, &out)?;
        }
        Command::Analyze(c) => {
            let config = Config::load(&c.config)?;
            let data = c.single_data(&config)?;
            let out = c.out_dir(&config);
            commands::analyze(&config, &data, &c.report(&out)?, &out)?;
        }
        Command::CompressionCurve(c) => {
            let config = Config::load(&c.config)?;
            let stages = c
                .data
                .iter()
                .map(|p| io::read_series(p, config.model.time_unit))
                .collect::<Result<Vec<_>>>()?;
            let out = c.out_dir(&config);
            commands::compression_curve(&config, &stages, &c.report(&out)?, &out)?;
        }
    }
    Ok(())
}
