use nalgebra::{DMatrix, DVector};

use super::{IntervalMethod, IntervalSet};
use crate::error::{Error, Result};
use crate::estimation::{covariance_matrix, mean_vector};
use crate::market_data::ReturnMatrix;

/// Bounds from every contiguous window of `window` rows.
///
/// Each of the `m - K + 1` windows gets its own mean and covariance (divisor
/// `K`); the bounds are the elementwise minimum and maximum over windows.
pub fn moving_window_intervals(returns: &ReturnMatrix, window: usize) -> Result<IntervalSet> {
    let m = returns.n_periods();
    let n = returns.n_assets();
    if window < 1 || window > m {
        return Err(Error::InvalidWindow { window, rows: m });
    }

    let mut mu_lo = DVector::from_element(n, f64::INFINITY);
    let mut mu_hi = DVector::from_element(n, f64::NEG_INFINITY);
    let mut sigma_lo = DMatrix::from_element(n, n, f64::INFINITY);
    let mut sigma_hi = DMatrix::from_element(n, n, f64::NEG_INFINITY);

    let windows = m - window + 1;
    for t in 0..windows {
        let sub = returns.values().rows(t, window).into_owned();
        let mu = mean_vector(&sub)?;
        let sigma = covariance_matrix(&sub, &mu)?;
        mu_lo.zip_apply(&mu, |lo, v| *lo = lo.min(v));
        mu_hi.zip_apply(&mu, |hi, v| *hi = hi.max(v));
        sigma_lo.zip_apply(&sigma, |lo, v| *lo = lo.min(v));
        sigma_hi.zip_apply(&sigma, |hi, v| *hi = hi.max(v));
    }
    log::debug!("moving window: K = {window}, {windows} windows over m = {m}");

    Ok(IntervalSet {
        method: IntervalMethod::MovingWindow { window, windows },
        codes: returns.codes().to_vec(),
        mu_lo,
        mu_hi,
        sigma_lo,
        sigma_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::estimate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_returns(m: usize, n: usize, seed: u64) -> ReturnMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ReturnMatrix::from_matrix(DMatrix::from_fn(m, n, |_, _| rng.random_range(-0.04..0.05)))
            .unwrap()
    }

    #[test]
    fn hand_enumerated_windows() {
        // windows (0, 10) and (10, 0): mean 5, variance 25 in both
        let r =
            ReturnMatrix::from_matrix(DMatrix::from_column_slice(3, 1, &[0.0, 10.0, 0.0])).unwrap();
        let u = moving_window_intervals(&r, 2).unwrap();
        assert_eq!(u.mu_lo[0], 5.0);
        assert_eq!(u.mu_hi[0], 5.0);
        assert_eq!(u.sigma_lo[(0, 0)], 25.0);
        assert_eq!(u.sigma_hi[(0, 0)], 25.0);
        assert_eq!(
            u.method,
            IntervalMethod::MovingWindow {
                window: 2,
                windows: 2
            }
        );
    }

    #[test]
    fn full_window_is_the_point_estimate() {
        let r = random_returns(40, 4, 5);
        let u = moving_window_intervals(&r, 40).unwrap();
        let est = estimate(&r).unwrap();
        assert_eq!(u.mu_lo, est.mu);
        assert_eq!(u.mu_hi, est.mu);
        assert_eq!(u.sigma_lo, est.sigma);
        assert_eq!(u.sigma_hi, est.sigma);
    }

    #[test]
    fn window_count_for_a_year_of_data() {
        let r = random_returns(247, 3, 9);
        let u = moving_window_intervals(&r, 90).unwrap();
        assert!(matches!(
            u.method,
            IntervalMethod::MovingWindow { windows: 158, .. }
        ));
    }

    #[test]
    fn invalid_windows() {
        let r = random_returns(10, 2, 1);
        assert!(matches!(
            moving_window_intervals(&r, 0),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(matches!(
            moving_window_intervals(&r, 11),
            Err(Error::InvalidWindow { .. })
        ));
    }

    #[test]
    fn bounds_are_valid_and_inside_return_range() {
        for seed in 0..20 {
            let r = random_returns(60, 3, seed);
            for k in [1, 7, 30, 60] {
                let u = moving_window_intervals(&r, k).unwrap();
                u.validate().unwrap();
                for i in 0..3 {
                    let col = r.values().column(i);
                    assert!(u.mu_lo[i] >= col.min() && u.mu_hi[i] <= col.max());
                    assert!(u.sigma_lo[(i, i)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn width_endpoints() {
        let r = random_returns(50, 3, 3);
        let full = moving_window_intervals(&r, 50).unwrap();
        let single = moving_window_intervals(&r, 1).unwrap();
        for i in 0..3 {
            assert_eq!(full.mu_hi[i] - full.mu_lo[i], 0.0);
            let col = r.values().column(i);
            // single-row windows: means are the returns themselves, variance 0
            assert_eq!(single.mu_lo[i], col.min());
            assert_eq!(single.mu_hi[i], col.max());
            assert!(single.mu_hi[i] - single.mu_lo[i] >= full.mu_hi[i] - full.mu_lo[i]);
            assert_eq!(single.sigma_hi[(i, i)], 0.0);
        }
    }
}
