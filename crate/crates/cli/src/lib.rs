//! Batch runner: ingest, tune, train, forecast, backtest and report, driven by
//! a TOML run configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use volstack_core::pipeline::Profile;

use crate::commands::Ctx;
use crate::config::{Overrides, RunConfig};
pub use crate::error::{CliError, CliResult};

pub const DEFAULT_CONFIG: &str = "volstack.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Smoke,
    Full,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Smoke => Profile::Smoke,
            ProfileArg::Full => Profile::Full,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "volstack", version, about = "Stacked-ensemble volatility forecasting and VaR/CVaR backtesting")]
pub struct Cli {
    /// Run configuration (TOML). Defaults to ./volstack.toml.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives canonical bit-reproducibility.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<ProfileArg>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build feature frames and write TRV diagnostics (ADF, KS).
    Ingest,
    /// Tune RF, GB and SVR under every configured resampling method.
    Tune,
    /// Fit the stacked model and the benchmarks from the tuning results.
    Train,
    /// Comparison-window volatility forecasts of every trained model.
    Forecast,
    /// RMSE tables and VaR/CVaR backtests on the comparison window.
    Backtest,
    /// Summarise every period into report.txt.
    Report,
    /// ingest, tune, train, forecast, backtest and report in sequence.
    Run,
    /// Write a synthetic GARCH(1,1) price CSV.
    Simulate {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2520)]
        n_prices: usize,
        #[arg(long, default_value = "2000-01-03")]
        start: NaiveDate,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            threads: self.threads,
            profile: self.profile.map(Into::into),
            out: self.out.clone(),
        }
    }

    fn load_config(&self) -> CliResult<RunConfig> {
        let path = self.config.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG));
        RunConfig::load(&path, &self.overrides())
    }
}

fn pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} worker threads: {e}")))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Command::Simulate {
        output,
        n_prices,
        start,
    } = &cli.command
    {
        let seed = match (&cli.config, cli.seed) {
            (_, Some(s)) => s,
            (Some(_), None) => cli.load_config()?.seed,
            (None, None) => 1,
        };
        return pool(cli.threads.unwrap_or(1))?.install(|| commands::simulate(output, *start, *n_prices, seed));
    }

    let cfg = cli.load_config()?;
    pool(cfg.threads)?.install(|| {
        let mut ctx = Ctx::open(cfg)?;
        match &cli.command {
            Command::Ingest => ctx.timed("ingest", |c| commands::ingest(c).map(|_| ())),
            Command::Tune => ctx.timed("tune", commands::tune),
            Command::Train => ctx.timed("train", commands::train),
            Command::Forecast => ctx.timed("forecast", commands::forecast),
            Command::Backtest => ctx.timed("backtest", commands::backtest_cmd),
            Command::Report => {
                let text = ctx.timed("report", commands::report)?;
                print!("{text}");
                Ok(())
            }
            Command::Run => {
                ctx.timed("ingest", |c| commands::ingest(c).map(|_| ()))?;
                ctx.timed("tune", commands::tune)?;
                ctx.timed("train", commands::train)?;
                ctx.timed("forecast", commands::forecast)?;
                ctx.timed("backtest", commands::backtest_cmd)?;
                let text = ctx.timed("report", commands::report)?;
                print!("{text}");
                Ok(())
            }
            Command::Simulate { .. } => unreachable!("handled above"),
        }
    })
}
