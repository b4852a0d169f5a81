//! Moment estimation of the drift of an Ornstein-Uhlenbeck process driven by
//! fractional Brownian motion and related Gaussian noises, with exact
//! cumulants of the estimator's second-chaos part and Monte Carlo
//! measurement of its Berry-Esseen rate.

pub mod berry_esseen;
pub mod covariance;
pub mod cumulants;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod quadrature;
pub mod sampler;
pub mod stats;

pub use covariance::{gram_matrix, ou_cov, sigma_b_sq, stationary_cov, CovMethod, GramMatrix, OuModel};
pub use error::{Error, Result};
pub use estimator::{b_n, f_of, g_of, moment_estimate, EstimatorResult};
pub use kernels::{kernel_cov, NoiseFamily, NoiseSpec};
