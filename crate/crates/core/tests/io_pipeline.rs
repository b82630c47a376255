//! File formats end to end: large round trips, unit vs aggregate paths, and
//! the validation errors users will hit.

mod common;

use std::path::Path;

use effcov::error::Error;
use effcov::estimators::Method;
use effcov::simlab::{simulate_panel, StructuralScenario};
use effcov::io::{
    cmd_aggregate, cmd_estimate, ingest_aggregates, ingest_units, write_matrix_file, write_units_file, EstimateConfig,
    InputKindArg, OmegaArg,
};
use nalgebra::DMatrix;

fn names(g: usize) -> Vec<String> {
    std::iter::once("Y".to_string()).chain((1..g).map(|j| format!("S{j}"))).collect()
}

fn config(input: &Path, method: Method, omega: Option<OmegaArg>) -> EstimateConfig {
    EstimateConfig {
        input: input.to_path_buf(),
        input_kind: InputKindArg::Auto,
        method,
        omega,
        n: None,
        primary_metric: None,
    }
}

/// A simulated million-unit panel survives the trip through a unit file:
/// the file's aggregates match the in-memory ones.
#[test]
fn million_row_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("units.csv");
    let s = StructuralScenario::preset("appendix-no-direct")
        .unwrap()
        .with_num_experiments(100)
        .unwrap()
        .with_units_per_experiment(10_000)
        .unwrap();
    let panel = simulate_panel(&s, 0).unwrap();
    write_units_file(&path, &panel.units, &s.metric_names).unwrap();
    let back = ingest_units(&path, None, false).unwrap();
    assert_eq!(back.summary.rows, 1_000_000);
    assert_eq!(back.summary.units_per_experiment, 10_000);
    let memory = panel.units.aggregate().unwrap();
    assert_eq!(back.aggregates.len(), memory.len());
    for (a, b) in back.aggregates.iter().zip(&memory) {
        assert_eq!(a.experiment_id, b.experiment_id);
        for (ca, cb) in a.arms.iter().zip(&b.arms) {
            assert_eq!(ca.count, cb.count);
            assert!((&ca.sum - &cb.sum).amax() <= 1e-10 * cb.sum.amax().max(1.0));
            assert!((&ca.cross - &cb.cross).amax() <= 1e-10 * cb.cross.amax().max(1.0));
        }
    }
}

#[test]
fn exported_aggregates_reproduce_unit_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let units_path = dir.path().join("units.csv");
    let aggs_path = dir.path().join("aggs.csv");
    let omega_path = dir.path().join("omega.csv");
    let table = common::random_units(5, 30, 40, 3);
    write_units_file(&units_path, &table, &names(3)).unwrap();
    let summary = cmd_aggregate(&units_path, &aggs_path, None).unwrap();
    assert_eq!((summary.num_experiments, summary.units_per_experiment), (30, 40));
    write_matrix_file(&omega_path, &names(3), &DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.0, 0.1, 0.0, 1.5]))
        .unwrap();

    let a = ingest_units(&units_path, None, false).unwrap();
    let b = ingest_aggregates(&aggs_path, None).unwrap();
    assert_eq!(a.metric_names, b.metric_names);
    for method in Method::ALL {
        for omega in [None, Some(OmegaArg::Within), Some(OmegaArg::File(omega_path.clone()))] {
            if method.needs_noise() && omega.is_none() {
                continue;
            }
            let u = cmd_estimate(&config(&units_path, method, omega.clone())).unwrap();
            let g = cmd_estimate(&config(&aggs_path, method, omega.clone())).unwrap();
            let lambda_gap = (u.lambda.to_matrix() - g.lambda.to_matrix()).amax();
            let w_gap = u.weights.values.iter().zip(&g.weights.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(lambda_gap.max(w_gap) <= 1e-10, "{method} {omega:?}: {lambda_gap:e} {w_gap:e}");
            assert_eq!(u.diagnostics.indefinite, g.diagnostics.indefinite);
        }
    }
}

#[test]
fn primary_metric_reorders_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("units.csv");
    let table = common::random_units(9, 10, 8, 3);
    write_units_file(&path, &table, &names(3)).unwrap();
    let mut cfg = config(&path, Method::Naive, None);
    cfg.primary_metric = Some("S2".into());
    let report = cmd_estimate(&cfg).unwrap();
    assert_eq!(report.config.metric_names, vec!["S2", "Y", "S1"]);
    assert_eq!(report.weights.metrics, vec!["Y", "S1"]);
    let plain = cmd_estimate(&config(&path, Method::Naive, None)).unwrap();
    let (a, b) = (report.lambda.to_matrix(), plain.lambda.to_matrix());
    assert_eq!(a[(0, 0)], b[(2, 2)]);
    assert_eq!(a[(1, 2)], b[(0, 1)]);
}

#[test]
fn single_experiment_is_a_dimension_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    let table = common::random_units(1, 1, 8, 2);
    write_units_file(&path, &table, &names(2)).unwrap();
    let err = cmd_estimate(&config(&path, Method::Naive, None)).unwrap_err();
    assert!(matches!(err.root(), Error::Dimension(_)), "{err}");
    assert_eq!(err.kind().exit_code(), 2);
}

#[test]
fn validation_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");

    std::fs::write(&path, "experiment_id,arm,count,sum_Y,sum_S,cross_Y_Y,cross_S_S\na,0,2,1,1,1,1\n").unwrap();
    let err = cmd_estimate(&config(&path, Method::Naive, None)).unwrap_err();
    assert!(matches!(err.root(), Error::Schema(_)), "{err}");
    assert!(err.to_string().contains("cross_Y_S"), "{err}");

    std::fs::write(&path, "experiment_id,arm,Y,S\na,0,1,2\na,1,1,2\nb,0,1,2\nb,1,oops,2\n").unwrap();
    let err = cmd_estimate(&config(&path, Method::Naive, None)).unwrap_err();
    assert!(matches!(err.root(), Error::Parse { line: 5, .. }), "{err}");

    let table = common::random_units(2, 4, 8, 2);
    write_units_file(&path, &table, &names(2)).unwrap();
    let omega_path = dir.path().join("omega.csv");
    write_matrix_file(&omega_path, &names(2), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
    let err = cmd_estimate(&config(&path, Method::Limlk, Some(OmegaArg::File(omega_path)))).unwrap_err();
    assert!(matches!(err.root(), Error::NotPositiveDefinite(_)), "{err}");

    let err = cmd_estimate(&config(&path, Method::Tc, None)).unwrap_err();
    assert_eq!(err.kind().exit_code(), 2, "{err}");

    let mut cfg = config(&path, Method::Naive, None);
    cfg.n = Some(10);
    assert!(cmd_estimate(&cfg).is_err());

    let err = cmd_estimate(&config(&dir.path().join("missing.csv"), Method::Naive, None)).unwrap_err();
    assert_eq!(err.kind().exit_code(), 4);
}

#[test]
fn naive_with_omega_warns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("units.csv");
    write_units_file(&path, &common::random_units(8, 6, 8, 2), &names(2)).unwrap();
    let report = cmd_estimate(&config(&path, Method::Naive, Some(OmegaArg::Within))).unwrap();
    assert!(report.warnings.iter().any(|w| w.contains("ignored")), "{:?}", report.warnings);
}
