//! Estimation of total counts over a spatial region from partially observed,
//! photo-aggregated point-pattern survey data.
//!
//! The main model is a log-Gaussian Cox process fitted by a nested Laplace
//! approximation over a hyperparameter grid, with the latent Matern field
//! represented as a Gaussian Markov random field on a triangular mesh.
//! Reference models (penalized-spline Poisson/negative-binomial regressions,
//! a conjugate homogeneous Poisson model, and a design-based transect
//! estimator), posterior-predictive integration, proper scoring rules, and
//! two cross-validation designs round out the toolkit.

pub mod baselines;
pub mod cv;
pub mod error;
pub mod gam;
pub mod geom;
pub mod gmrf;
pub mod lgcp;
pub mod mesh;
pub mod prediction;
pub mod scoring;
pub mod simulator;
pub mod survey;

pub use error::{Error, Result};
