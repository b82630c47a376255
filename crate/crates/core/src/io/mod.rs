//! File formats, the estimate report, scenario files, and the command
//! implementations behind the `effcov` binary.
//!
//! All delimited numeric output uses 17 significant digits so that values
//! read back bit-exactly.

pub mod aggregates;
pub mod commands;
pub mod format;
pub mod matrix;
pub mod report;
pub mod scenario_file;
pub mod units;

pub use aggregates::{ingest_aggregates, read_aggregates, write_aggregates, write_aggregates_file};
pub use commands::{
    cmd_aggregate, cmd_estimate, cmd_simulate, load_input, EstimateConfig, InputKindArg, OmegaArg, SimulateConfig,
    SimulateOutput,
};
pub use matrix::{read_matrix, read_matrix_file, write_matrix, write_matrix_file};
pub use report::{InputKind, LabeledMatrix, OmegaSource, ReportDocument};
pub use scenario_file::{load_scenario, ScenarioFile};
pub use units::{ingest_units, read_units, write_units, write_units_file, IngestSummary, PanelData};
