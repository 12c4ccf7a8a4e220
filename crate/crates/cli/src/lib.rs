//! `abel` command line: integrate, certify, find closed solutions, sweep
//! displacements and reproduce the worked examples.

// NaN must fail range checks, so negated comparisons are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod examples;
pub mod output;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};

/// Exit codes shared by all verbs.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const BLOW_UP: i32 = 2;
    pub const FAILS: i32 = 3;
    pub const NOT_APPLICABLE: i32 = 4;
    pub const BRACKET_INVALID: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "abel", version, about = "Abel equations of the first kind: y' + a y^3 + b y^2 + c y + d = 0")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Equation config (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", env = "ABEL_OUT")]
    pub out: Option<PathBuf>,
    /// Uniform certification grid points per unit time
    #[arg(long, global = true, value_name = "N")]
    pub grid_density: Option<f64>,
    /// Cut-off for unbounded intervals
    #[arg(long, global = true, value_name = "H")]
    pub horizon: Option<f64>,
    /// Solver relative tolerance
    #[arg(long, global = true, value_name = "X")]
    pub tol: Option<f64>,
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            grid_density: self.grid_density,
            horizon: self.horizon,
            tol: self.tol,
        }
    }

    /// The config file with command-line overrides applied.
    pub fn load(&self) -> Result<RunConfig> {
        let Some(path) = &self.config else {
            bail!("this command needs --config PATH");
        };
        let mut cfg = RunConfig::load(path)?;
        cfg.apply(&self.overrides())?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one initial value; writes traj.csv
    Integrate {
        #[arg(long, allow_hyphen_values = true)]
        y0: f64,
        /// End time; defaults to interval.t1 or t0 + horizon
        #[arg(long, allow_hyphen_values = true)]
        t_end: Option<f64>,
    },
    /// Check a theorem's hypotheses; writes certificate.json
    Certify {
        /// Theorem id, e.g. 3.1, Thm4.1, Cor5.2
        theorem: String,
    },
    /// Certify a closed-solution strategy and bisect; writes closed.json and closed-traj.csv
    FindClosed {
        /// 5.1 to 5.7, Cor5.1 or Cor5.2
        strategy: String,
        /// Right end T; defaults to closed.period or interval.t1
        #[arg(long, allow_hyphen_values = true)]
        period: Option<f64>,
    },
    /// Displacement y(T) - gamma over evenly spaced initial values; writes sweep.csv
    Sweep {
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 101)]
        count: usize,
        #[arg(long, allow_hyphen_values = true)]
        period: Option<f64>,
    },
    /// Reproduce a worked example (3.1, 3.2, 3.3, 3.4, 5.1)
    Example {
        id: String,
        /// Parameter mu of examples 3.3 and 3.4
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let g = &cli.global;
    match &cli.command {
        Command::Integrate { y0, t_end } => commands::integrate(&g.load()?, *y0, *t_end),
        Command::Certify { theorem } => commands::certify(&g.load()?, theorem),
        Command::FindClosed { strategy, period } => commands::find_closed(&g.load()?, strategy, *period),
        Command::Sweep { from, to, count, period } => commands::sweep(&g.load()?, *from, *to, *count, *period),
        Command::Example { id, mu } => examples::run(id, *mu, g),
    }
}
