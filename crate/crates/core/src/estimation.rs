//! Sample mean vector and population covariance matrix of a return sample.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnMatrix;
use crate::serde_nalgebra;

/// Mean returns and their covariance for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatePair {
    pub codes: Vec<String>,
    #[serde(with = "serde_nalgebra::vector")]
    pub mu: DVector<f64>,
    #[serde(with = "serde_nalgebra::matrix")]
    pub sigma: DMatrix<f64>,
}

impl EstimatePair {
    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }
}

/// Column means of an observations-by-assets matrix.
pub fn mean_vector(returns: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = returns.nrows();
    if m == 0 || returns.ncols() == 0 {
        return Err(Error::Empty("return matrix"));
    }
    let m = m as f64;
    Ok(DVector::from_iterator(
        returns.ncols(),
        returns.column_iter().map(|c| {
            let first = c.iter().sum::<f64>() / m;
            // second pass removes most of the rounding in the first
            first + c.iter().map(|v| v - first).sum::<f64>() / m
        }),
    ))
}

/// Covariance with divisor `m` (not `m - 1`), centred on `mu`.
///
/// Only the upper triangle is accumulated; the lower one is mirrored so the
/// result is exactly symmetric.
pub fn covariance_matrix(returns: &DMatrix<f64>, mu: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = returns.shape();
    if m == 0 || n == 0 {
        return Err(Error::Empty("return matrix"));
    }
    if mu.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "mean vector has {} entries for {n} assets",
            mu.len()
        )));
    }
    let mut centred = returns.clone();
    for (mut col, &mean) in centred.column_iter_mut().zip(mu.iter()) {
        col.add_scalar_mut(-mean);
    }
    let inv = 1.0 / m as f64;
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        let ci = centred.column(i);
        for k in i..n {
            let v = ci.dot(&centred.column(k)) * inv;
            sigma[(i, k)] = v;
            sigma[(k, i)] = v;
        }
    }
    Ok(sigma)
}

/// Mean and covariance of a full return matrix.
pub fn estimate(returns: &ReturnMatrix) -> Result<EstimatePair> {
    let mu = mean_vector(returns.values())?;
    let sigma = covariance_matrix(returns.values(), &mu)?;
    Ok(EstimatePair {
        codes: returns.codes().to_vec(),
        mu,
        sigma,
    })
}
