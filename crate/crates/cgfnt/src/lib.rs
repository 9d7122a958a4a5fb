//! Normality tests built on Hessians of empirical cumulant generating
//! functions, with distribution-free Monte Carlo calibration.
//!
//! The test standardizes a sample into scaled residuals, evaluates the
//! empirical CGF Hessian at a fixed random point set with coordinates in
//! `[-R, R]`, and compares the off-diagonal (dependence) and diagonal
//! (marginal) deviations from the identity against a simulated null
//! distribution.

pub mod calibration;
pub mod competitors;
pub mod distributions;
pub mod ecgf;
pub mod error;
pub mod exec;
pub mod harness;
pub mod influence;
pub mod rng;
pub mod standardize;

pub use calibration::{run_test, run_test_univariate, NullCalibration, TestResult};
pub use ecgf::{stat_pair, stat_univariate, EvalPointSet, PairStatistics};
pub use error::{Error, Result};
pub use standardize::{scaled_residuals, SampleMatrix, Standardization};
