//! Bias-corrected estimation for generalized partially linear models
//! `f{y | xᵀβ + m(z), φ}`.
//!
//! The unknown function `m` is replaced by a B-spline expansion, giving a
//! parametric approximating model. [`smle`] fits that model by maximum
//! likelihood (with a Pearson equation for the dispersion), and [`sabre`]
//! corrects the fit's finite-sample bias by matching it to its own
//! simulated expectation under the approximating model. [`inference`]
//! supplies plug-in covariances and Wald intervals; [`harness`] drives
//! dataset fits and Monte Carlo studies.

pub mod family;
pub mod harness;
pub mod inference;
pub mod rng;
pub mod sabre;
pub mod smle;
pub mod spline;

pub use family::{Family, FamilyError, Model, ResponseMechanism};
pub use inference::{
    beta_covariance, gamma_covariance, m_pointwise_ci, wald_ci, CovarianceFactors, InferenceError,
};
pub use sabre::{fit_sabre, simulate_and_refit, SabreConfig, SabreError, SabreResult};
pub use smle::{
    fit_smle, u_gamma, u_phi, Dataset, Design, FitError, FitInit, FitOptions, FitResult,
};
pub use spline::{design_matrix, SplineBasis, SplineError};
