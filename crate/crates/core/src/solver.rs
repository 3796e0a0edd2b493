//! Simplex-constrained QP solver with KKT certification.
//!
//! The Hessian is first projected onto the PSD cone by eigenvalue clipping
//! (the elementwise worst-case covariance `Σ⁰ + Δ` is generally not PSD).
//! The repaired problem is then solved by accelerated projected gradient
//! with a fixed step `1 / λmax(Q)` and a function-value restart, which keeps
//! accepted iterates monotone. A solution is returned only once
//! `‖x − Π(x − ∇f(x))‖∞ ≤ tol`, where `Π` is the Euclidean projection onto
//! the simplex.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProblemKind, QpProblem};
use crate::serde_nalgebra;
use crate::uncertainty::max_asymmetry;

const SYMMETRY_TOL: f64 = 1e-12;
const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// KKT residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Eigenvalue floor used by the PSD repair.
    pub psd_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
            psd_eps: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.psd_eps >= 0.0 && self.psd_eps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "psd_eps must be finite and nonnegative, got {}",
                self.psd_eps
            )));
        }
        Ok(())
    }
}

/// A certified optimum of a [`QpProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSolution {
    pub label: ProblemKind,
    pub gamma: f64,
    pub codes: Vec<String>,
    #[serde(with = "serde_nalgebra::vector")]
    pub weights: DVector<f64>,
    /// `½ xᵀQx + cᵀx` on the PSD-repaired `Q`.
    pub f_val: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Largest amount an eigenvalue was raised by the PSD repair; 0 when `Q`
    /// was already PSD.
    pub psd_shift: f64,
    /// Step-size constant `λmax` of the repaired `Q`.
    pub lipschitz: f64,
}

/// Result of [`repair_psd`].
#[derive(Debug, Clone, PartialEq)]
pub struct PsdRepair {
    pub matrix: DMatrix<f64>,
    /// `max(eps − λ)` over clipped eigenvalues, 0 if none were clipped.
    pub shift: f64,
    pub min_eigenvalue: f64,
    /// Largest eigenvalue after clipping.
    pub max_eigenvalue: f64,
}

/// Nearest matrix (in Frobenius norm) with all eigenvalues `>= eps`.
pub fn nearest_psd(m: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    Ok(repair_psd(m, eps)?.matrix)
}

/// Eigenvalue clipping with diagnostics. An input that already satisfies the
/// floor is returned unchanged, bit for bit.
pub fn repair_psd(m: &DMatrix<f64>, eps: f64) -> Result<PsdRepair> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Empty("matrix"));
    }
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min_eigenvalue = eig.eigenvalues.min();
    let shift = eig
        .eigenvalues
        .iter()
        .map(|&l| eps - l)
        .fold(0.0_f64, f64::max);
    let clipped = eig.eigenvalues.map(|l| l.max(eps));
    let max_eigenvalue = clipped.max();

    if min_eigenvalue >= eps {
        return Ok(PsdRepair {
            matrix: m.clone(),
            shift: 0.0,
            min_eigenvalue,
            max_eigenvalue,
        });
    }
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let matrix = (&rebuilt + rebuilt.transpose()) * 0.5;
    Ok(PsdRepair {
        matrix,
        shift,
        min_eigenvalue,
        max_eigenvalue,
    })
}

/// Largest-magnitude eigenvalue estimate of a symmetric matrix by power
/// iteration from the all-ones vector.
pub fn power_iteration_norm(m: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w).abs();
        v = w / norm;
        if (next - estimate).abs() <= tol * next.max(1.0) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` by sorting and thresholding.
pub fn project_simplex(v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Err(Error::Empty("vector to project"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig(
            "non-finite entry in projection input".into(),
        ));
    }
    Ok(project_simplex_unchecked(v))
}

fn project_simplex_unchecked(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

fn check_feasible(x: &DVector<f64>) -> Result<()> {
    let s = x.sum();
    if (s - 1.0).abs() > FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!("weights sum to {s}")));
    }
    if let Some(bad) = x
        .iter()
        .find(|&&w| !(-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&w))
    {
        return Err(Error::Infeasible(format!("weight {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Fixed-point optimality measure `‖x − Π(x − (Qx + c))‖∞`.
///
/// Zero exactly at the minimisers when `Q` is PSD.
pub fn kkt_residual(p: &QpProblem, x: &DVector<f64>) -> Result<f64> {
    if x.len() != p.n_assets() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} entries for {} assets",
            x.len(),
            p.n_assets()
        )));
    }
    check_feasible(x)?;
    Ok(residual(p, x))
}

fn residual(p: &QpProblem, x: &DVector<f64>) -> f64 {
    fixed_point_residual(x, &p.gradient(x))
}

fn fixed_point_residual(x: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let moved = project_simplex_unchecked(&(x - g));
    (x - moved).amax()
}

/// One accepted iterate, reported to the observer of [`solve_qp_observed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iterate {
    pub iteration: usize,
    pub objective: f64,
    /// Objective change from the previous accepted iterate, computed from
    /// gradients rather than by differencing two objective values.
    pub change: f64,
    pub kkt_residual: f64,
}

pub fn solve_qp(p: &QpProblem, cfg: &SolverConfig) -> Result<PortfolioSolution> {
    solve_qp_observed(p, cfg, |_| {})
}

/// [`solve_qp`] with a callback on every accepted iterate.
pub fn solve_qp_observed<F: FnMut(&Iterate)>(
    p: &QpProblem,
    cfg: &SolverConfig,
    mut observe: F,
) -> Result<PortfolioSolution> {
    p.validate()?;
    cfg.validate()?;
    let n = p.n_assets();
    let repair = repair_psd(&p.q, cfg.psd_eps)?;
    if repair.shift > 0.0 {
        log::warn!(
            "{:?} gamma={}: Q not PSD (min eigenvalue {:e}), clipped by {:e}",
            p.label,
            p.gamma,
            repair.min_eigenvalue,
            repair.shift
        );
    }
    let repaired = QpProblem {
        q: repair.matrix,
        ..p.clone()
    };
    let lipschitz = repair.max_eigenvalue.max(1e-12);
    let step = 1.0 / lipschitz;

    let finish = |x: DVector<f64>, iterations: usize, kkt: f64| {
        let weights = x.map(|w| w.clamp(0.0, 1.0));
        PortfolioSolution {
            label: p.label,
            gamma: p.gamma,
            codes: p.codes.clone(),
            f_val: repaired.objective(&weights),
            weights,
            iterations,
            kkt_residual: kkt,
            psd_shift: repair.shift,
            lipschitz,
        }
    };

    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut gx = repaired.gradient(&x);
    let r0 = fixed_point_residual(&x, &gx);
    if r0 <= cfg.tol {
        return Ok(finish(x, 0, r0));
    }

    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut momentum = false;
    let mut best = r0;
    for iteration in 1..=cfg.max_iter {
        let gy = if momentum {
            repaired.gradient(&y)
        } else {
            gx.clone()
        };
        let x_new = project_simplex_unchecked(&(&y - gy * step));
        let g_new = repaired.gradient(&x_new);
        let d = &x_new - &x;
        // exact change of a quadratic: f(x + d) - f(x) = ½ dᵀ(∇f(x) + ∇f(x + d))
        let change = 0.5 * d.dot(&(&gx + &g_new));

        if momentum && change > 0.0 {
            // overshoot: drop the momentum and take a plain step from x
            t = 1.0;
            y = x.clone();
            momentum = false;
            continue;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = &x_new + d * beta;
        momentum = beta > 0.0;
        x = x_new;
        gx = g_new;
        t = t_next;

        let r = fixed_point_residual(&x, &gx);
        best = best.min(r);
        observe(&Iterate {
            iteration,
            objective: repaired.objective(&x),
            change,
            kkt_residual: r,
        });
        if r <= cfg.tol {
            return Ok(finish(x, iteration, r));
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        residual: best,
    })
}
