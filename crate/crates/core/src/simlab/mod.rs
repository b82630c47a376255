//! Simulation laboratory: structural scenarios, panel generation and Monte
//! Carlo studies of the estimators.

pub mod figure;
pub mod montecarlo;
pub mod npiv;
pub mod panel;
pub mod scenario;

pub use figure::{reference_lines, whiten_rows, LineSet, ReferenceLines};
pub use montecarlo::{
    run_lambda_study, run_monte_carlo, EstimatorSummary, LambdaStudy, McResult, ReplicationDraw, ScenarioEcho,
};
pub use npiv::{npiv_gradient_check, NpivGap, NpivReport};
pub use panel::{
    draw_truth, experiment_id, replication_rng, simulate_aggregates, simulate_panel, simulate_panel_with_rng,
    supports_exact_aggregates, PanelTruth, SimulatedAggregates, SimulatedPanel,
};
pub use scenario::{FixedEffects, NpivSpec, PresetInfo, QuadraticFunction, ScenarioKind, StructuralScenario, PRESETS};
