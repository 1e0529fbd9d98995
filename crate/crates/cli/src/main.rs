//! `gbergomi`: batch runs of the simulation, pricing, asymptotics and
//! calibration routines.
//!
//! Exit codes: 0 on success, 1 on a numerical failure, 2 on bad input or
//! configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunConfig, SpotEngine, SweepAxis, Target};

/// Error split by exit code.
pub enum Failure {
    Input(anyhow::Error),
    Numerical(anyhow::Error),
}

pub type Outcome<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn input(self) -> Outcome<T>;
    fn numerical(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Outcome<T> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn numerical(self) -> Outcome<T> {
        self.map_err(|e| Failure::Numerical(e.into()))
    }
}

#[derive(Parser)]
#[command(name = "gbergomi", version, about = "Grey Bergomi model: simulation, pricing, asymptotics, calibration")]
struct Cli {
    /// TOML run configuration; every table is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true, env = "GBERGOMI_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print Mittag-Leffler, M-Wright density and moment tables.
    Specfun {
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        kappa: Vec<f64>,
    },
    /// Simulate VIX_T or S_T and write the samples.
    Simulate {
        #[arg(long)]
        target: Option<Target>,
        #[arg(long)]
        maturity: Option<f64>,
        #[arg(long)]
        engine: Option<SpotEngine>,
    },
    /// Monte Carlo smile with an arctan fit and ATM metrics.
    Price {
        #[arg(long)]
        target: Option<Target>,
        #[arg(long)]
        maturity: Option<f64>,
        #[arg(long)]
        engine: Option<SpotEngine>,
    },
    /// VIX futures bounds against Monte Carlo futures.
    Bounds,
    /// Sweep of the short-time limits.
    Asymptotics {
        #[arg(long)]
        sweep: Option<SweepAxis>,
    },
    /// Calibrate (H, β, η) to the VIX smile, then ρ to the SPX skew.
    Calibrate,
}

fn run(cli: Cli) -> Outcome<()> {
    if let Command::Specfun { beta, x, kappa } = &cli.command {
        return commands::specfun(*beta, x, kappa);
    }
    let mut cfg = RunConfig::load(cli.config.as_deref()).input()?;
    if let Some(s) = cli.seed {
        cfg.mc.seed = s;
    }
    if let Some(n) = cli.paths {
        cfg.mc.n_paths = n;
    }
    if let Some(w) = cli.workers {
        cfg.mc.workers = w;
        cfg.calibrate.search.workers = w;
    }
    if let Some(d) = cli.out_dir {
        cfg.io.out_dir = d;
    }
    match &cli.command {
        Command::Simulate { target, maturity, engine } => {
            cfg.simulate.target = target.unwrap_or(cfg.simulate.target);
            cfg.simulate.maturity = maturity.unwrap_or(cfg.simulate.maturity);
            cfg.mc.engine = engine.unwrap_or(cfg.mc.engine);
        }
        Command::Price { target, maturity, engine } => {
            cfg.price.target = target.unwrap_or(cfg.price.target);
            cfg.price.maturity = maturity.unwrap_or(cfg.price.maturity);
            cfg.mc.engine = engine.unwrap_or(cfg.mc.engine);
        }
        Command::Asymptotics { sweep } => {
            cfg.asymptotics.sweep = sweep.unwrap_or(cfg.asymptotics.sweep);
        }
        _ => {}
    }
    cfg.validate().input()?;
    match cli.command {
        Command::Specfun { .. } => unreachable!(),
        Command::Simulate { .. } => commands::simulate(&cfg),
        Command::Price { .. } => commands::price(&cfg),
        Command::Bounds => commands::bounds(&cfg),
        Command::Asymptotics { .. } => commands::asymptotics(&cfg),
        Command::Calibrate => commands::calibrate_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(1)
        }
    }
}
