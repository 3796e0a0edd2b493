//! Mean-variance problems in minimisation form.
//!
//! Both the classical and the robust model reduce to
//!
//! ```text
//! minimise   f(x) = ½ xᵀQx + cᵀx
//! subject to Σ x_i = 1,  0 ≤ x_i ≤ 1
//! ```
//!
//! Classical: `Q = γΣ`, `c = −μ`. Robust: `Q = γ(Σ⁰ + Δ)`, `c = −(μ⁰ − β)`.
//! With `x ≥ 0` the worst mean in the box is `μ⁰ − β` and the worst
//! covariance entry is `σ⁰ + δ`, so the robust problem is the worst case of
//! the classical one over the interval set. `f` is the negated
//! return-minus-risk objective, so smaller is better.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EstimatePair;
use crate::serde_nalgebra;
use crate::uncertainty::{max_asymmetry, RobustParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Classical,
    Robust,
}

/// Quadratic program over the unit simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub label: ProblemKind,
    pub gamma: f64,
    pub codes: Vec<String>,
    #[serde(rename = "Q", with = "serde_nalgebra::matrix")]
    pub q: DMatrix<f64>,
    #[serde(with = "serde_nalgebra::vector")]
    pub c: DVector<f64>,
}

impl QpProblem {
    pub fn n_assets(&self) -> usize {
        self.c.len()
    }

    /// `½ xᵀQx + cᵀx`
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    /// `Qx + c`
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.c
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if n == 0 {
            return Err(Error::Empty("quadratic program"));
        }
        if self.q.shape() != (n, n) || self.codes.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "Q is {}x{}, c has {n} entries, {} codes",
                self.q.nrows(),
                self.q.ncols(),
                self.codes.len()
            )));
        }
        check_gamma(self.gamma)?;
        if self.q.iter().chain(self.c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite problem data".into()));
        }
        let asym = max_asymmetry(&self.q);
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

fn check_shapes(mu: &DVector<f64>, sigma: &DMatrix<f64>, codes: &[String]) -> Result<()> {
    let n = mu.len();
    if sigma.shape() != (n, n) || codes.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "mu has {n} entries, sigma is {}x{}, {} codes",
            sigma.nrows(),
            sigma.ncols(),
            codes.len()
        )));
    }
    Ok(())
}

/// `Q = γΣ`, `c = −μ`.
pub fn build_classical_qp(est: &EstimatePair, gamma: f64) -> Result<QpProblem> {
    check_gamma(gamma)?;
    check_shapes(&est.mu, &est.sigma, &est.codes)?;
    let p = QpProblem {
        label: ProblemKind::Classical,
        gamma,
        codes: est.codes.clone(),
        q: &est.sigma * gamma,
        c: -&est.mu,
    };
    p.validate()?;
    Ok(p)
}

/// `Q = γ(Σ⁰ + Δ)`, `c = −(μ⁰ − β)`.
pub fn build_robust_qp(rp: &RobustParams, gamma: f64) -> Result<QpProblem> {
    check_gamma(gamma)?;
    rp.validate()?;
    let p = QpProblem {
        label: ProblemKind::Robust,
        gamma,
        codes: rp.codes.clone(),
        q: (&rp.sigma0 + &rp.delta) * gamma,
        c: -(&rp.mu0 - &rp.beta),
    };
    p.validate()?;
    Ok(p)
}
