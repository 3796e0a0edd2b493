//! Command-line flags, the optional TOML file, and the merged run
//! configuration. Precedence: flag (or `PORTOPT_SEED` for the seed), then
//! file, then built-in default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use portopt::pipeline::Method;
use portopt::solver::SolverConfig;
use portopt::uncertainty::{BlockRule, BootstrapConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "portopt",
    version,
    about = "Robust mean-variance portfolio optimisation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Mean vector and covariance matrix of the daily returns.
    Estimate,
    /// Interval bounds and their midpoint/half-width form.
    Uncertainty,
    /// One portfolio per risk-aversion level.
    Optimize,
    /// Whole-share allocation of the capital on the buy date.
    Allocate,
    /// Allocation, capital gain at the sell date and the return series.
    Backtest,
    /// Cumulative portfolio return between the buy and sell dates.
    Series,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Uncertainty => "uncertainty",
            Command::Optimize => "optimize",
            Command::Allocate => "allocate",
            Command::Backtest => "backtest",
            Command::Series => "series",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Floor,
    Unfloored,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// TOML file with defaults for any of the options below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Price CSV: a `date` column then one column per asset.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Fill empty cells with the previous day's price instead of failing.
    #[arg(long, global = true)]
    pub fill_forward: bool,
    #[arg(long, global = true, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Moving-window length.
    #[arg(long, global = true, value_name = "K")]
    pub window: Option<usize>,
    /// Bootstrap replications.
    #[arg(long, global = true, value_name = "N")]
    pub nboot: Option<usize>,
    /// Bootstrap significance level.
    #[arg(long, global = true, value_name = "A")]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_name = "S", env = "PORTOPT_SEED")]
    pub seed: Option<u64>,
    /// How block length and count follow from the sample size.
    #[arg(long, global = true, value_enum)]
    pub block_rule: Option<RuleArg>,
    /// Fixed bootstrap block length.
    #[arg(long, global = true, value_name = "L")]
    pub block_len: Option<usize>,
    /// Comma-separated risk-aversion levels.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, global = true, value_name = "C")]
    pub capital: Option<f64>,
    #[arg(long, global = true, value_name = "D")]
    pub buy_date: Option<NaiveDate>,
    #[arg(long, global = true, value_name = "D")]
    pub sell_date: Option<NaiveDate>,
    /// Portfolio weights to use instead of optimising: a solution JSON from
    /// `optimize` or a CSV with `code,weight` columns.
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: portopt::Error| e.to_string())
}

/// Keys accepted in the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub fill_forward: Option<bool>,
    pub method: Option<Method>,
    pub window: Option<usize>,
    pub n_boot: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub block_rule: Option<BlockRule>,
    pub block_len: Option<usize>,
    pub gamma: Option<Vec<f64>>,
    pub capital: Option<f64>,
    pub buy_date: Option<NaiveDate>,
    pub sell_date: Option<NaiveDate>,
    pub weights: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Effective configuration of one run; echoed into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: PathBuf,
    pub fill_forward: bool,
    pub method: Method,
    pub window: usize,
    pub bootstrap: BootstrapConfig,
    pub solver: SolverConfig,
    pub gamma: Vec<f64>,
    pub capital: f64,
    pub buy_date: Option<NaiveDate>,
    pub sell_date: Option<NaiveDate>,
    pub weights: Option<PathBuf>,
    pub out: PathBuf,
    pub format: Format,
}

impl RunConfig {
    pub fn resolve(command: Command, flags: Flags) -> anyhow::Result<Self> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let defaults = BootstrapConfig::default();
        let solver_defaults = SolverConfig::default();
        let block_rule = match flags.block_rule {
            Some(RuleArg::Floor) => Some(BlockRule::Floor),
            Some(RuleArg::Unfloored) => Some(BlockRule::Unfloored),
            None => None,
        };

        let Some(input) = flags.input.or(file.input) else {
            bail!("no input file: pass --input or set `input` in the config file");
        };
        let cfg = RunConfig {
            command,
            input,
            fill_forward: flags.fill_forward || file.fill_forward.unwrap_or(false),
            method: flags.method.or(file.method).unwrap_or(Method::RobustMw),
            window: flags.window.or(file.window).unwrap_or(90),
            bootstrap: BootstrapConfig {
                n_boot: flags.nboot.or(file.n_boot).unwrap_or(defaults.n_boot),
                alpha: flags.alpha.or(file.alpha).unwrap_or(defaults.alpha),
                seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
                block_len_override: flags.block_len.or(file.block_len),
                block_rule: block_rule.or(file.block_rule).unwrap_or_default(),
            },
            solver: SolverConfig {
                tol: file.tol.unwrap_or(solver_defaults.tol),
                max_iter: file.max_iter.unwrap_or(solver_defaults.max_iter),
                ..solver_defaults
            },
            gamma: flags
                .gamma
                .or(file.gamma)
                .unwrap_or_else(|| vec![5.0, 50.0, 100.0]),
            capital: flags.capital.or(file.capital).unwrap_or(100_000.0),
            buy_date: flags.buy_date.or(file.buy_date),
            sell_date: flags.sell_date.or(file.sell_date),
            weights: flags.weights.or(file.weights),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            format: flags.format.or(file.format).unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.gamma.is_empty() {
            bail!("the gamma list is empty");
        }
        if let Some(g) = self.gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            bail!("gamma must be positive, got {g}");
        }
        if !(self.capital > 0.0 && self.capital.is_finite()) {
            bail!("capital must be positive, got {}", self.capital);
        }
        if self.window == 0 {
            bail!("window must be at least 1");
        }
        self.bootstrap.validate()?;
        self.solver.validate()?;
        if let (Some(b), Some(s)) = (self.buy_date, self.sell_date) {
            if s < b {
                bail!("sell date {s} is before buy date {b}");
            }
        }
        Ok(())
    }
}
