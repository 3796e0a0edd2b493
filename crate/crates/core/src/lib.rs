//! Robust mean-variance portfolio optimisation with interval uncertainty sets.
//!
//! The pipeline runs in five stages, one module each:
//!
//! 1. [`market_data`]: load closing prices from CSV and turn them into
//!    daily simple returns.
//! 2. [`estimation`]: sample mean vector and covariance matrix.
//! 3. [`uncertainty`]: elementwise intervals on both, by moving window or
//!    block bootstrap, and their midpoint/half-width form.
//! 4. [`model`] and [`solver`]: assemble the classical or robust problem as a
//!    simplex-constrained QP and solve it to a certified KKT tolerance.
//! 5. [`backtest`]: whole-share allocation of a cash budget, capital gain
//!    between two dates, cumulative return series.
//!
//! ```
//! use portopt::market_data::{compute_returns, load_prices, FillPolicy};
//! use portopt::pipeline::{optimize, Method, PipelineConfig};
//!
//! let csv = "date,AAA,BBB,CCC\n\
//!            2023-01-02,100,50,20\n\
//!            2023-01-03,101,49,20.5\n\
//!            2023-01-04,103,50,20.1\n\
//!            2023-01-05,102,52,20.3\n\
//!            2023-01-06,104,51,20.9\n";
//! let prices = load_prices(csv.as_bytes(), FillPolicy::Reject)?;
//! let returns = compute_returns(&prices)?;
//!
//! let cfg = PipelineConfig { method: Method::RobustMw, window: 2, ..Default::default() };
//! let solutions = optimize(&returns, &cfg, &[5.0, 50.0])?;
//! for s in &solutions {
//!     assert!((s.weights.sum() - 1.0).abs() < 1e-10);
//!     assert!(s.kkt_residual <= 1e-9);
//! }
//! assert!(solutions[0].f_val <= solutions[1].f_val);
//! # Ok::<(), portopt::Error>(())
//! ```

pub mod backtest;
mod error;
pub mod estimation;
pub mod market_data;
pub mod model;
pub mod pipeline;
mod serde_nalgebra;
pub mod solver;
pub mod uncertainty;

pub use error::{Error, Result};

// Code listings in the guide are compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/returns.md")]
    mod returns {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/robust-model.md")]
    mod robust_model {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/backtest.md")]
    mod backtest {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
