//! Meta-analysis of many weak A/B experiments.
//!
//! Estimates the covariance of true treatment effects across metrics from
//! noisy per-experiment data, derives proxy-metric weights from it, and
//! checks the estimators against simulated panels.
//!
//! * [`effects`]: domain types and the OLS (`θ₁`) and TLS (`θ₂`) estimands.
//! * [`estimators`]: naive, jackknife, LIMLK, total-covariance and k-class.
//! * [`simlab`]: structural scenarios, panel simulation and Monte Carlo studies.
//! * [`io`]: file formats, reports, and the command implementations behind the CLI.

pub mod effects;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod simlab;

pub use effects::{
    cov_of_effects, theta1, theta2, CovEstimate, Estimand, NoiseModel, PanelDims, Provenance, ProxyWeights,
    TrueEffects,
};
pub use error::{Error, ErrorKind, Result};
