//! Interval uncertainty sets for the mean vector and covariance matrix.
//!
//! Two constructions are provided: [`moving_window_intervals`] bounds each
//! entry by its extremes over overlapping sub-samples, and
//! [`block_bootstrap_intervals`] bounds each entry by percentiles of its
//! resampling distribution. Either result converts into midpoint/half-width
//! form with [`robust_params`].

mod bootstrap;
mod moving_window;

pub use bootstrap::{
    block_bootstrap_intervals, block_layout, BlockLayout, BlockRule, BootstrapConfig,
};
pub use moving_window::moving_window_intervals;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_nalgebra;

/// How an [`IntervalSet`] was produced, with the parameters used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "snake_case")]
pub enum IntervalMethod {
    MovingWindow {
        /// Window length `K`.
        window: usize,
        /// Number of windows processed, `m - K + 1`.
        windows: usize,
    },
    Bootstrap {
        n_boot: usize,
        alpha: f64,
        seed: u64,
        block_rule: BlockRule,
        block_len_override: Option<usize>,
        /// `m^(1/3)` before any rounding.
        cube_root: f64,
        /// Rows drawn per block, `L`.
        block_len: usize,
        /// Blocks per replication, `B`.
        n_blocks: usize,
    },
}

/// Elementwise bounds `mu_lo <= mu <= mu_hi`, `sigma_lo <= sigma <= sigma_hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    #[serde(flatten)]
    pub method: IntervalMethod,
    pub codes: Vec<String>,
    #[serde(with = "serde_nalgebra::vector")]
    pub mu_lo: DVector<f64>,
    #[serde(with = "serde_nalgebra::vector")]
    pub mu_hi: DVector<f64>,
    #[serde(with = "serde_nalgebra::matrix")]
    pub sigma_lo: DMatrix<f64>,
    #[serde(with = "serde_nalgebra::matrix")]
    pub sigma_hi: DMatrix<f64>,
}

impl IntervalSet {
    pub fn n_assets(&self) -> usize {
        self.mu_lo.len()
    }

    /// Checks shapes, ordering of the bounds and symmetry.
    pub fn validate(&self) -> Result<()> {
        let n = self.mu_lo.len();
        if n == 0 {
            return Err(Error::Empty("interval set"));
        }
        if self.mu_hi.len() != n
            || self.codes.len() != n
            || self.sigma_lo.shape() != (n, n)
            || self.sigma_hi.shape() != (n, n)
        {
            return Err(Error::DimensionMismatch(format!(
                "interval set for {n} assets has inconsistent shapes"
            )));
        }
        if let Some(i) = (0..n).find(|&i| !(self.mu_lo[i] <= self.mu_hi[i])) {
            return Err(Error::InvalidConfig(format!(
                "mean interval for {} is reversed",
                self.codes[i]
            )));
        }
        for i in 0..n {
            for k in 0..n {
                if !(self.sigma_lo[(i, k)] <= self.sigma_hi[(i, k)]) {
                    return Err(Error::InvalidConfig(format!(
                        "covariance interval ({i},{k}) is reversed"
                    )));
                }
            }
        }
        for m in [&self.sigma_lo, &self.sigma_hi] {
            let asym = max_asymmetry(m);
            if asym > 1e-12 {
                return Err(Error::NotSymmetric(asym));
            }
        }
        Ok(())
    }
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            worst = worst.max((m[(i, k)] - m[(k, i)]).abs());
        }
    }
    worst
}

/// Interval midpoints and half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustParams {
    pub codes: Vec<String>,
    #[serde(with = "serde_nalgebra::vector")]
    pub mu0: DVector<f64>,
    #[serde(with = "serde_nalgebra::vector")]
    pub beta: DVector<f64>,
    #[serde(with = "serde_nalgebra::matrix")]
    pub sigma0: DMatrix<f64>,
    #[serde(with = "serde_nalgebra::matrix")]
    pub delta: DMatrix<f64>,
}

impl RobustParams {
    pub fn n_assets(&self) -> usize {
        self.mu0.len()
    }

    /// Zero-width parameters centred on a point estimate.
    pub fn from_point(codes: Vec<String>, mu: DVector<f64>, sigma: DMatrix<f64>) -> Self {
        let n = mu.len();
        Self {
            codes,
            beta: DVector::zeros(n),
            delta: DMatrix::zeros(sigma.nrows(), sigma.ncols()),
            mu0: mu,
            sigma0: sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mu0.len();
        if n == 0 {
            return Err(Error::Empty("robust parameters"));
        }
        if self.beta.len() != n
            || self.codes.len() != n
            || self.sigma0.shape() != (n, n)
            || self.delta.shape() != (n, n)
        {
            return Err(Error::DimensionMismatch(format!(
                "robust parameters for {n} assets have inconsistent shapes"
            )));
        }
        if self.beta.iter().any(|b| !(*b >= 0.0)) || self.delta.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidConfig(
                "half-widths must be nonnegative".into(),
            ));
        }
        for m in [&self.sigma0, &self.delta] {
            let asym = max_asymmetry(m);
            if asym > 1e-12 {
                return Err(Error::NotSymmetric(asym));
            }
        }
        Ok(())
    }
}

/// Midpoint/half-width form of an interval set:
/// `mu0 = (hi + lo) / 2`, `beta = (hi - lo) / 2`, and likewise for the
/// covariance bounds.
pub fn robust_params(set: &IntervalSet) -> Result<RobustParams> {
    set.validate()?;
    Ok(RobustParams {
        codes: set.codes.clone(),
        mu0: (&set.mu_hi + &set.mu_lo) * 0.5,
        beta: (&set.mu_hi - &set.mu_lo) * 0.5,
        sigma0: (&set.sigma_hi + &set.sigma_lo) * 0.5,
        delta: (&set.sigma_hi - &set.sigma_lo) * 0.5,
    })
}

/// Linear-interpolation percentile on the sorted sample.
///
/// With the sample sorted as `s[0] <= ... <= s[N-1]` and `h = p (N - 1)`,
/// returns `s[floor h] + (h - floor h) (s[floor h + 1] - s[floor h])`.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("percentile samples"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "percentile probability {p} outside [0, 1]"
        )));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidConfig("NaN in percentile samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let v = percentile(&s, 0.025).unwrap();
        assert!((v - 3.475).abs() < 1e-12, "{v}");
    }

    #[test]
    fn percentile_boundaries() {
        let s = [5.0, -2.0, 9.0, 0.5];
        assert_eq!(percentile(&s, 0.0).unwrap(), -2.0);
        assert_eq!(percentile(&s, 1.0).unwrap(), 9.0);
        for p in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(percentile(&[4.0, 4.0, 4.0], p).unwrap(), 4.0);
        }
        assert_eq!(percentile(&[7.0], 0.4).unwrap(), 7.0);
    }

    #[test]
    fn percentile_errors() {
        assert!(matches!(percentile(&[], 0.5), Err(Error::Empty(_))));
        assert!(percentile(&[1.0], 1.5).is_err());
        assert!(percentile(&[1.0], f64::NAN).is_err());
    }

    fn set_1d(lo: f64, hi: f64, slo: f64, shi: f64) -> IntervalSet {
        IntervalSet {
            method: IntervalMethod::MovingWindow {
                window: 1,
                windows: 1,
            },
            codes: vec!["X".into()],
            mu_lo: DVector::from_element(1, lo),
            mu_hi: DVector::from_element(1, hi),
            sigma_lo: DMatrix::from_element(1, 1, slo),
            sigma_hi: DMatrix::from_element(1, 1, shi),
        }
    }

    #[test]
    fn degenerate_interval_has_zero_width() {
        let rp = robust_params(&set_1d(0.3, 0.3, 0.1, 0.1)).unwrap();
        assert_eq!(rp.mu0[0], 0.3);
        assert_eq!(rp.beta[0], 0.0);
        assert_eq!(rp.delta[(0, 0)], 0.0);
    }

    #[test]
    fn reversed_interval_rejected() {
        assert!(robust_params(&set_1d(0.3, 0.2, 0.1, 0.1)).is_err());
        assert!(robust_params(&set_1d(0.1, 0.2, 0.3, 0.1)).is_err());
    }

    #[test]
    fn json_layout() {
        let v = serde_json::to_value(set_1d(0.0, 1.0, 0.5, 2.0)).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            ["codes", "method", "mu_hi", "mu_lo", "params", "sigma_hi", "sigma_lo"]
        );
        assert_eq!(v["method"], "moving_window");
        assert_eq!(v["sigma_hi"], serde_json::json!([[2.0]]));
        let back: IntervalSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, set_1d(0.0, 1.0, 0.5, 2.0));
    }
}
