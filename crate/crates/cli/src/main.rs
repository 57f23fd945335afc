//! `frontier`: validate panels, estimate fixed-effects stochastic frontiers,
//! decompose productivity change and run Monte Carlo studies.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 convergence failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{FrontierArg, RunConfig, TechnicalChangeArg, VariantArg};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "frontier",
    version,
    about = "Fixed-effects stochastic frontier analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print firm and firm-year counts by category and year.
    Validate(Common),
    /// Estimate the frontier per category (or pooled) and write coefficient,
    /// inefficiency and fixed-effect tables.
    Estimate(Common),
    /// Decompose productivity change using saved estimates.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Estimates file; defaults to `<out>/estimates.json`.
        #[arg(long)]
        estimates: Option<PathBuf>,
        /// Last year of the first averaging period.
        #[arg(long)]
        boundary: Option<i32>,
    },
    /// Run a Monte Carlo recovery study.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replications: Option<usize>,
        /// Only write one simulated panel to `<out>/panel.csv`.
        #[arg(long)]
        panel_only: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Estimate one model over all firms, ignoring categories.
    #[arg(long)]
    pooled: bool,
    #[arg(long, value_enum)]
    frontier: Option<FrontierArg>,
    /// Efficiency-change formula.
    #[arg(long, value_enum)]
    dte: Option<VariantArg>,
    /// Fixed-effect recovery formula.
    #[arg(long, value_enum)]
    fe: Option<VariantArg>,
    /// Technical-change measure.
    #[arg(long, value_enum)]
    tc: Option<TechnicalChangeArg>,
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.estimation.seed = s;
            cfg.simulation.dgp.seed = s;
        }
        cfg.pooled |= self.pooled;
        if let Some(f) = self.frontier {
            cfg.frontier = f;
        }
        if let Some(v) = self.dte {
            cfg.dte = v;
        }
        if let Some(v) = self.fe {
            cfg.fixed_effects = v;
        }
        if let Some(v) = self.tc {
            cfg.technical_change = v;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate(common) => {
            let report = commands::cmd_validate(&common.resolve()?)?;
            print!("{}", report.render_text());
        }
        Command::Estimate(common) => {
            commands::cmd_estimate(&common.resolve()?)?;
        }
        Command::Decompose {
            common,
            estimates,
            boundary,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(b) = boundary {
                cfg.boundary = b;
            }
            commands::cmd_decompose(&cfg, estimates.as_deref())?;
        }
        Command::Simulate {
            common,
            replications,
            panel_only,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(r) = replications {
                cfg.simulation.replications = r;
            }
            commands::cmd_simulate(&cfg, panel_only)?;
        }
    }
    Ok(())
}

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => match run(cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("frontier: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            let _ = e.print();
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            }
        }
    };
    std::process::exit(code);
}
