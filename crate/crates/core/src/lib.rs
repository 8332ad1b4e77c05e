//! Bayes factors for testing whether the effect of a predictor on an outcome
//! is linear or nonlinear.
//!
//! The nonlinear model replaces the regression coefficient by a coefficient
//! function `beta(x)` with a squared-exponential Gaussian process prior whose
//! scale follows Zellner's g prior. The roughness `xi` of the kernel is zero
//! exactly under linearity, so the test compares `xi = 0` against a
//! half-Cauchy prior on `xi > 0`.

// `!(a > b)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod draws;
pub mod error;
pub mod float_serde;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod sim;

pub use draws::{
    draw_functions_posterior, draw_functions_prior, draw_functions_prior_marginal,
    one_sided_bayes_factors, one_sided_test, sign_consistency, FunctionDraws, OneSidedResult,
    SignConsistency,
};
pub use error::{Error, Result};
pub use inference::{
    log_bf01_importance, log_bf01_quadrature, posterior_model_probs, sample_posterior,
    BayesFactorResult, HalfCauchy, Method, PosteriorSample,
};
pub use sim::{generate, run_grid, summarize, GridSpec, Kind, Scenario, SimRow};
pub use model::{
    build_v, log_marginal_given_xi, residualize_x, validate_dataset, Dataset, Scale, TestConfig,
};
