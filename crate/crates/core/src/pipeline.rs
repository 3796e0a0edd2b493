//! End-to-end helpers: from a return matrix to one solution per risk
//! aversion level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimate, EstimatePair};
use crate::market_data::ReturnMatrix;
use crate::model::{build_classical_qp, build_robust_qp, QpProblem};
use crate::solver::{solve_qp, PortfolioSolution, SolverConfig};
use crate::uncertainty::{
    block_bootstrap_intervals, moving_window_intervals, robust_params, BootstrapConfig,
    IntervalSet, RobustParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Plain mean-variance on the full-sample estimate.
    Classical,
    /// Robust model with moving-window intervals.
    RobustMw,
    /// Robust model with block-bootstrap intervals.
    RobustBoot,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Classical => "classical",
            Method::RobustMw => "robust-mw",
            Method::RobustBoot => "robust-boot",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Method::Classical),
            "robust-mw" => Ok(Method::RobustMw),
            "robust-boot" => Ok(Method::RobustBoot),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?} (expected classical, robust-mw or robust-boot)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: Method,
    /// Moving-window length `K`.
    pub window: usize,
    pub bootstrap: BootstrapConfig,
    pub solver: SolverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: Method::RobustMw,
            window: 90,
            bootstrap: BootstrapConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// Model inputs for one method.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInputs {
    Classical(EstimatePair),
    Robust {
        intervals: IntervalSet,
        params: RobustParams,
    },
}

impl ModelInputs {
    pub fn build(returns: &ReturnMatrix, cfg: &PipelineConfig) -> Result<Self> {
        let intervals = match cfg.method {
            Method::Classical => return Ok(ModelInputs::Classical(estimate(returns)?)),
            Method::RobustMw => moving_window_intervals(returns, cfg.window)?,
            Method::RobustBoot => block_bootstrap_intervals(returns, &cfg.bootstrap)?,
        };
        let params = robust_params(&intervals)?;
        Ok(ModelInputs::Robust { intervals, params })
    }

    pub fn problem(&self, gamma: f64) -> Result<QpProblem> {
        match self {
            ModelInputs::Classical(est) => build_classical_qp(est, gamma),
            ModelInputs::Robust { params, .. } => build_robust_qp(params, gamma),
        }
    }
}

/// Solve for every gamma (in parallel); results keep the order of `gammas`.
pub fn solve_gammas(
    inputs: &ModelInputs,
    gammas: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<PortfolioSolution>> {
    if gammas.is_empty() {
        return Err(Error::Empty("gamma list"));
    }
    gammas
        .par_iter()
        .map(|&g| solve_qp(&inputs.problem(g)?, solver))
        .collect()
}

pub fn optimize(
    returns: &ReturnMatrix,
    cfg: &PipelineConfig,
    gammas: &[f64],
) -> Result<Vec<PortfolioSolution>> {
    let inputs = ModelInputs::build(returns, cfg)?;
    solve_gammas(&inputs, gammas, &cfg.solver)
}
