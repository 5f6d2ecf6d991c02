//! Penalized least squares in reproducing kernel Hilbert spaces, aggregation
//! of the resulting estimators with exponential weights, and the Monte Carlo
//! studies that compare them against empirical risk minimization and
//! cross-validation.
//!
//! The crate is organised bottom-up:
//!
//! * [`regression`]: targets, designs, noise, simulated samples and risks.
//! * [`kernels`]: reproducing kernels, Gram matrices, spectral decay fits.
//! * [`perm`]: the penalized empirical risk minimizer (kernel ridge
//!   regression) with hat-matrix based LOOCV/GCV selectors.
//! * [`aggregation`]: exponential weights, temperature selection, sample
//!   splitting, jackknife averaging and smoothness grids.
//! * [`suboptimality`]: the dyadic dictionary on which ERM is provably slow.
//! * [`experiments`]: the MISE benchmark, reports and plot data.
//! * [`cli`]: the `expagg` command line front-end.

pub mod aggregation;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod perm;
pub mod regression;
pub mod seed;
pub mod suboptimality;

pub use error::{Error, Result};
