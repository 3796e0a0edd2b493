use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{percentile_sorted, IntervalMethod, IntervalSet};
use crate::error::{Error, Result};
use crate::estimation::{covariance_matrix, mean_vector};
use crate::market_data::ReturnMatrix;

/// How the block length `L` and block count `B` follow from `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRule {
    /// `L = floor(m^(1/3))`, `B = floor(m / L)`.
    #[default]
    Floor,
    /// `B = ceil(m / m^(1/3))` computed with the unrounded cube root, while
    /// each block still draws `floor(m^(1/3))` rows. For `m = 247` this gives
    /// 40 blocks of 6 rows instead of 41.
    Unfloored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of replications.
    pub n_boot: usize,
    /// Two-sided significance level; bounds are the `alpha/2` and
    /// `1 - alpha/2` percentiles.
    pub alpha: f64,
    pub seed: u64,
    /// Fixed block length; takes precedence over `block_rule`.
    pub block_len_override: Option<usize>,
    pub block_rule: BlockRule,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_boot: 1000,
            alpha: 0.05,
            seed: 0,
            block_len_override: None,
            block_rule: BlockRule::Floor,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_boot must be at least 2, got {}",
                self.n_boot
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.block_len_override == Some(0) {
            return Err(Error::InvalidConfig("block length must be positive".into()));
        }
        Ok(())
    }
}

/// Resolved block geometry for a sample of `m` rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockLayout {
    pub cube_root: f64,
    pub block_len: usize,
    pub n_blocks: usize,
}

impl BlockLayout {
    /// Rows in one bootstrap sample, `B * L`.
    pub fn sample_rows(&self) -> usize {
        self.block_len * self.n_blocks
    }
}

/// Largest `l` with `l^3 <= m`.
fn integer_cube_root(m: usize) -> usize {
    let mut l = (m as f64).cbrt().floor() as usize;
    while (l + 1).pow(3) <= m {
        l += 1;
    }
    while l > 0 && l.pow(3) > m {
        l -= 1;
    }
    l
}

pub fn block_layout(m: usize, cfg: &BootstrapConfig) -> Result<BlockLayout> {
    if m < 2 {
        return Err(Error::TooFewRows { needed: 2, got: m });
    }
    let cube_root = (m as f64).cbrt();
    let layout = match (cfg.block_len_override, cfg.block_rule) {
        (Some(l), _) => {
            if l == 0 || l > m {
                return Err(Error::InvalidConfig(format!(
                    "block length {l} must lie in 1..={m}"
                )));
            }
            BlockLayout {
                cube_root,
                block_len: l,
                n_blocks: m / l,
            }
        }
        (None, BlockRule::Floor) => {
            let l = integer_cube_root(m);
            BlockLayout {
                cube_root,
                block_len: l,
                n_blocks: m / l,
            }
        }
        (None, BlockRule::Unfloored) => BlockLayout {
            cube_root,
            block_len: integer_cube_root(m),
            n_blocks: (m as f64 / cube_root).ceil() as usize,
        },
    };
    Ok(layout)
}

/// Percentile bounds from `n_boot` block-bootstrap replications.
///
/// Each replication concatenates `B` blocks of `L` return rows drawn
/// uniformly with replacement (whole rows, so same-day cross-asset
/// dependence is kept), then computes the sample mean and covariance.
/// Replication `i` draws from the ChaCha stream `i` of `seed`, so the output
/// depends only on the inputs and not on how rayon schedules the work.
pub fn block_bootstrap_intervals(
    returns: &ReturnMatrix,
    cfg: &BootstrapConfig,
) -> Result<IntervalSet> {
    cfg.validate()?;
    let m = returns.n_periods();
    let n = returns.n_assets();
    let layout = block_layout(m, cfg)?;
    log::info!(
        "block bootstrap: m = {m}, m^(1/3) = {:.4}, L = {}, B = {}, N_boot = {}",
        layout.cube_root,
        layout.block_len,
        layout.n_blocks,
        cfg.n_boot
    );

    let data = returns.values();
    let replications: Vec<(DVector<f64>, DMatrix<f64>)> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(rep as u64);
            let mut sample = DMatrix::zeros(layout.sample_rows(), n);
            let mut row = 0;
            for _block in 0..layout.n_blocks {
                for _ in 0..layout.block_len {
                    let src = rng.random_range(0..m);
                    sample.set_row(row, &data.row(src));
                    row += 1;
                }
            }
            let mu = mean_vector(&sample)?;
            let sigma = covariance_matrix(&sample, &mu)?;
            Ok((mu, sigma))
        })
        .collect::<Result<_>>()?;

    let lo_p = cfg.alpha / 2.0;
    let hi_p = 1.0 - cfg.alpha / 2.0;
    let mut buf = vec![0.0; cfg.n_boot];
    let mut bounds = |get: &dyn Fn(&(DVector<f64>, DMatrix<f64>)) -> f64| {
        for (slot, rep) in buf.iter_mut().zip(&replications) {
            *slot = get(rep);
        }
        buf.sort_by(f64::total_cmp);
        (percentile_sorted(&buf, lo_p), percentile_sorted(&buf, hi_p))
    };

    let mut mu_lo = DVector::zeros(n);
    let mut mu_hi = DVector::zeros(n);
    for i in 0..n {
        (mu_lo[i], mu_hi[i]) = bounds(&|r| r.0[i]);
    }
    let mut sigma_lo = DMatrix::zeros(n, n);
    let mut sigma_hi = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let (lo, hi) = bounds(&|r| r.1[(i, k)]);
            sigma_lo[(i, k)] = lo;
            sigma_lo[(k, i)] = lo;
            sigma_hi[(i, k)] = hi;
            sigma_hi[(k, i)] = hi;
        }
    }

    Ok(IntervalSet {
        method: IntervalMethod::Bootstrap {
            n_boot: cfg.n_boot,
            alpha: cfg.alpha,
            seed: cfg.seed,
            block_rule: cfg.block_rule,
            block_len_override: cfg.block_len_override,
            cube_root: layout.cube_root,
            block_len: layout.block_len,
            n_blocks: layout.n_blocks,
        },
        codes: returns.codes().to_vec(),
        mu_lo,
        mu_hi,
        sigma_lo,
        sigma_hi,
    })
}
