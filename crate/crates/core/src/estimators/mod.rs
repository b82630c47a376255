//! Estimators of the treatment-effect covariance `Λ_K` and the k-class
//! cross-check, built on per-cell sufficient statistics.

pub mod aggregate;
pub mod covariance;
pub mod kclass;
pub mod method;
pub mod units;

pub use aggregate::{
    aggregate_units, panel_units_per_experiment, Aggregator, CellAggregate, ExperimentAggregate, UnitRecord,
};
pub use covariance::{
    jackknife_lambda, limlk_weights, naive_expectation, naive_sigma, pooled_cell_omega, tau_hat_matrix,
    tc_lambda,
};
pub use kclass::{
    kclass_k, kclass_moment_matrix, kclass_theta1, kclass_theta1_from_aggregates, kclass_theta1_with_k,
    within_experiment_omega, within_experiment_tilde_scatter, KCLASS_WITHIN_SCALE,
};
pub use method::{run_method, Method, MethodOutput};
pub use units::{UnitRow, UnitTable};
