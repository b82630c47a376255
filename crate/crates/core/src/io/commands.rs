//! Command implementations behind the CLI. Each returns its result instead of
//! printing, so the binary stays a thin shell and tests can call these directly.

use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::effects::{cov_of_effects, NoiseModel};
use crate::error::{Error, Result, StageExt};
use crate::estimators::{pooled_cell_omega, run_method, tau_hat_matrix, Method};
use crate::io::aggregates::{ingest_aggregates, write_aggregates_file};
use crate::io::format::{file_digest, fmt_f64};
use crate::io::matrix::{read_matrix_file, write_matrix_file};
use crate::io::report::{
    interpretation, ConfigEcho, Diagnostics, InputEcho, InputKind, LabeledMatrix, OmegaSource, ReportDocument,
    WeightsBlock,
};
use crate::io::scenario_file::{load_scenario, ScenarioFile};
use crate::io::units::{ingest_units, write_units_file, IngestSummary, PanelData};
use crate::simlab::{
    reference_lines, run_monte_carlo, simulate_aggregates, simulate_panel, whiten_rows, McResult, ReferenceLines,
    StructuralScenario,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKindArg {
    /// Aggregate files are recognised by their `count` and `sum_*` columns.
    #[default]
    Auto,
    Units,
    Aggregates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OmegaArg {
    File(PathBuf),
    Within,
}

impl std::str::FromStr for OmegaArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidInput("--omega needs a file path or 'within'".into()));
        }
        Ok(if s == "within" { OmegaArg::Within } else { OmegaArg::File(PathBuf::from(s)) })
    }
}

/// Parameters of `estimate`.
#[derive(Debug, Clone)]
pub struct EstimateConfig {
    pub input: PathBuf,
    pub input_kind: InputKindArg,
    pub method: Method,
    pub omega: Option<OmegaArg>,
    /// Expected units per experiment; checked against the data when given.
    pub n: Option<usize>,
    pub primary_metric: Option<String>,
}

fn detect_kind(path: &Path) -> Result<InputKind> {
    let mut head = String::new();
    std::fs::File::open(path)?.take(1 << 16).read_to_string(&mut head)?;
    let first = head.lines().next().unwrap_or("");
    let cols: Vec<&str> = first.split(',').map(str::trim).collect();
    let is_agg = cols.contains(&"count") && cols.iter().any(|c| c.starts_with("sum_"));
    Ok(if is_agg { InputKind::Aggregates } else { InputKind::Units })
}

/// Reads a unit or aggregate file.
pub fn load_input(path: &Path, kind: InputKindArg, primary: Option<&str>, keep_units: bool) -> Result<(InputKind, PanelData)> {
    let kind = match kind {
        InputKindArg::Auto => detect_kind(path)?,
        InputKindArg::Units => InputKind::Units,
        InputKindArg::Aggregates => InputKind::Aggregates,
    };
    let data = match kind {
        InputKind::Units => ingest_units(path, primary, keep_units)?,
        InputKind::Aggregates => ingest_aggregates(path, primary)?,
    };
    Ok((kind, data))
}

/// Runs one estimator end to end and builds the report.
/// Current UTC time, or `SOURCE_DATE_EPOCH` when set, so reports can be
/// reproduced byte for byte.
pub fn report_timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn cmd_estimate(cfg: &EstimateConfig) -> Result<ReportDocument> {
    let method = cfg.method;
    let (kind, data) = load_input(&cfg.input, cfg.input_kind, cfg.primary_metric.as_deref(), method == Method::Kclass)
        .stage("reading input")?;
    let digest = file_digest(&cfg.input).stage("reading input")?;
    let n = data.summary.units_per_experiment;
    if let Some(expected) = cfg.n {
        if expected != n {
            return Err(Error::InvalidInput(format!("--n {expected} does not match the data (n = {n} units per experiment)")))
                .stage("validating input");
        }
    }
    let mut warnings = data.warnings.clone();
    if kind == InputKind::Aggregates && method == Method::Kclass {
        warnings.push("kclass on aggregate input uses the exact aggregate identity instead of unit rows".into());
    }

    let (noise, omega_source) = match (&cfg.omega, method) {
        (None, m) if m.needs_noise() => {
            return Err(Error::InvalidInput(format!("method '{m}' requires --omega <file|within>"))).stage("configuring");
        }
        (Some(arg), Method::Naive | Method::Jackknife) => {
            warnings.push(format!("--omega {} is ignored by method '{method}'", omega_label(arg)));
            (None, None)
        }
        (Some(OmegaArg::File(p)), Method::Kclass) => {
            warnings.push(format!(
                "--omega {} is ignored by method 'kclass', which always uses the within-experiment scatter",
                p.display()
            ));
            (None, Some(OmegaSource::WithinExperimentTilde))
        }
        (_, Method::Kclass) => (None, Some(OmegaSource::WithinExperimentTilde)),
        (Some(OmegaArg::File(p)), _) => {
            let m = read_matrix_file(p, &data.metric_names).stage("reading omega")?;
            let nm = NoiseModel::new(m).stage("reading omega")?;
            let src = OmegaSource::File { path: p.display().to_string(), sha256: file_digest(p).stage("reading omega")? };
            (Some(nm), Some(src))
        }
        (Some(OmegaArg::Within), _) => {
            (Some(pooled_cell_omega(&data.aggregates).stage("estimating omega")?), Some(OmegaSource::PooledWithinCell))
        }
        (None, _) => (None, None),
    };

    let out = run_method(method, &data.aggregates, data.units.as_ref(), noise.as_ref()).stage("estimating")?;
    if out.lambda.is_indefinite() {
        warnings.push("estimated covariance of true effects is indefinite".into());
    }
    let names = &data.metric_names;
    let omega_matrix = match (&noise, method) {
        (Some(nm), _) => Some(LabeledMatrix::new(names, nm.omega())),
        (None, Method::Kclass) => Some(LabeledMatrix::new(
            names,
            &crate::estimators::within_experiment_tilde_scatter(&data.aggregates).stage("estimating omega")?,
        )),
        _ => None,
    };
    let secondary = names[1..].to_vec();
    let w = &out.weights;
    Ok(ReportDocument {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generated_at: report_timestamp(),
        input: InputEcho { path: cfg.input.display().to_string(), kind, sha256: digest, summary: data.summary },
        config: ConfigEcho {
            method,
            primary_metric: names[0].clone(),
            metric_names: names.clone(),
            units_per_experiment: n,
            omega_source,
        },
        lambda: LabeledMatrix::new(names, out.lambda.matrix()),
        lambda_provenance: out.lambda.provenance(),
        weights: WeightsBlock { estimand: w.estimand, metrics: secondary.clone(), values: w.weights.iter().copied().collect() },
        diagnostics: Diagnostics {
            indefinite: out.lambda.is_indefinite(),
            eigenvalues: out.lambda.eigenvalues().iter().copied().collect(),
            kappa: w.kappa,
            residual_norm: w.residual_norm,
            gamma_y: w.gamma_y,
            omega_condition_number: noise.as_ref().map(NoiseModel::condition_number),
        },
        omega: omega_matrix,
        warnings,
        interpretation: interpretation(method, &names[0], &secondary, out.lambda.is_indefinite()),
    })
}

fn omega_label(arg: &OmegaArg) -> String {
    match arg {
        OmegaArg::File(p) => p.display().to_string(),
        OmegaArg::Within => "within".into(),
    }
}

/// `aggregate`: unit file → aggregate file.
pub fn cmd_aggregate(input: &Path, out: &Path, primary: Option<&str>) -> Result<IngestSummary> {
    let data = ingest_units(input, primary, false).stage("reading input")?;
    write_aggregates_file(out, &data.aggregates, &data.metric_names).stage("writing aggregates")?;
    Ok(data.summary)
}

/// Parameters of `simulate`.
#[derive(Debug, Clone)]
pub struct SimulateConfig {
    /// Preset name or TOML path.
    pub scenario: String,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub num_experiments: Option<usize>,
    pub methods: Vec<Method>,
    pub out: PathBuf,
    pub full_scale: bool,
    /// Also write replication 0 as a unit-level file.
    pub write_panel: bool,
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub result: McResult,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn resolve_scenario(cfg: &SimulateConfig) -> Result<(StructuralScenario, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut s = load_scenario(&cfg.scenario)?;
    if cfg.full_scale {
        s = s.at_full_scale()?;
        warnings.push(format!(
            "full scale: K = {}, n = {}, R = {}; this can take hours",
            s.dims.num_experiments, s.dims.units_per_experiment, s.replications
        ));
    }
    if let Some(r) = cfg.replications {
        s = s.with_replications(r)?;
    }
    if let Some(n) = cfg.n {
        s = s.with_units_per_experiment(n)?;
    }
    if let Some(k) = cfg.num_experiments {
        s = s.with_num_experiments(k)?;
    }
    if let Some(seed) = cfg.seed {
        s = s.with_seed(seed);
    }
    Ok((s, warnings))
}

/// Runs the Monte Carlo study and writes its tables and plot data into `cfg.out`.
pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<SimulateOutput> {
    let (scenario, mut warnings) = resolve_scenario(cfg).stage("loading scenario")?;
    let result = run_monte_carlo(&scenario, &cfg.methods).stage("simulating")?;
    std::fs::create_dir_all(&cfg.out).map_err(Error::from).stage("writing output")?;
    let mut files = Vec::new();
    let mut write = |name: &str, body: String| -> Result<()> {
        let path = cfg.out.join(name);
        std::fs::write(&path, body)?;
        files.push(path);
        Ok(())
    };
    let mut extra = Vec::new();
    let names = &scenario.metric_names;
    write("scenario.toml", ScenarioFile::from_scenario(&scenario).to_toml()).stage("writing output")?;
    write("mc_table.csv", mc_table_csv(&result, names)).stage("writing output")?;
    write("mc_draws.csv", mc_draws_csv(&result, names)).stage("writing output")?;
    write("mc_result.json", serde_json::to_string_pretty(&result).expect("serializes") + "\n").stage("writing output")?;

    let sim = simulate_aggregates(&scenario, 0).stage("simulating")?;
    let tau_hat = tau_hat_matrix(&sim.aggregates);
    let ids: Vec<&str> = sim.aggregates.iter().map(|a| a.experiment_id.as_str()).collect();
    write("scatter_raw.csv", scatter_csv(&ids, names, &tau_hat, Some(sim.truth.effects.matrix())))
        .stage("writing output")?;
    match NoiseModel::new(scenario.omega.clone()) {
        Ok(noise) => {
            let white = whiten_rows(&tau_hat, &noise);
            let white_truth = whiten_rows(sim.truth.effects.matrix(), &noise);
            write("scatter_whitened.csv", scatter_csv(&ids, names, &white, Some(&white_truth))).stage("writing output")?;
            let lambda = match scenario.population_lambda() {
                Some(l) => l,
                None => cov_of_effects(&sim.truth.effects).stage("reference lines")?.into_matrix(),
            };
            match reference_lines(&lambda, &noise, scenario.dims.units_per_experiment) {
                Ok(lines) => write("reference_lines.csv", reference_lines_csv(&lines, names)).stage("writing output")?,
                Err(e) => warnings.push(format!("reference lines not written: {e}")),
            }
            let omega_path = cfg.out.join("omega.csv");
            write_matrix_file(&omega_path, names, noise.omega()).stage("writing output")?;
            extra.push(omega_path);
        }
        Err(e) => warnings.push(format!("whitened scatter and reference lines not written: {e}")),
    }
    if cfg.write_panel {
        let panel = simulate_panel(&scenario, 0).stage("simulating")?;
        let path = cfg.out.join("panel_units.csv");
        write_units_file(&path, &panel.units, names).stage("writing output")?;
        extra.push(path);
    }
    files.extend(extra);
    Ok(SimulateOutput { result, files, warnings })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One row per (estimator, secondary metric).
pub fn mc_table_csv(r: &McResult, names: &[String]) -> String {
    let mut out = String::from("estimator,metric,beta,mean,mc_se,sd,bias,bias_in_se,successes,failures,indefinite_frequency\n");
    for s in &r.estimators {
        let z = s.bias_in_se();
        for (j, metric) in names[1..].iter().enumerate() {
            let row = [
                s.estimator.to_string(),
                metric.clone(),
                fmt_f64(r.scenario.beta[j]),
                opt(s.mean.as_ref().map(|m| m[j])),
                opt(s.mc_se.as_ref().map(|m| m[j])),
                opt(s.sd.as_ref().map(|m| m[j])),
                opt(s.bias.as_ref().map(|m| m[j])),
                opt(z.as_ref().map(|m| m[j])),
                s.successes.to_string(),
                s.failures.to_string(),
                opt(s.indefinite_frequency),
            ];
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

/// One row per (replication, estimator); failed replications have empty weights.
pub fn mc_draws_csv(r: &McResult, names: &[String]) -> String {
    let mut out = String::from("replication,estimator");
    for m in &names[1..] {
        out.push_str(&format!(",w_{m}"));
    }
    out.push('\n');
    for d in &r.draws {
        for (s, w) in r.estimators.iter().zip(&d.weights) {
            out.push_str(&format!("{},{}", d.replication, s.estimator));
            for j in 0..names.len() - 1 {
                out.push(',');
                out.push_str(&opt(w.as_ref().map(|w| w[j])));
            }
            out.push('\n');
        }
    }
    out
}

fn scatter_csv(ids: &[&str], names: &[String], est: &DMatrix<f64>, truth: Option<&DMatrix<f64>>) -> String {
    let mut out = String::from("experiment_id");
    for m in names {
        out.push_str(&format!(",tau_hat_{m}"));
    }
    if truth.is_some() {
        for m in names {
            out.push_str(&format!(",tau_{m}"));
        }
    }
    out.push('\n');
    for (t, id) in ids.iter().enumerate() {
        out.push_str(id);
        let mut row: Vec<f64> = est.row(t).iter().copied().collect();
        if let Some(m) = truth {
            row.extend(m.row(t).iter());
        }
        for v in &row {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Lines through the origin, `Y = Σ_j w_j S_j`, one row per (space, line).
pub fn reference_lines_csv(lines: &ReferenceLines, names: &[String]) -> String {
    let mut out = String::from("space,line,units_per_experiment");
    for m in &names[1..] {
        out.push_str(&format!(",w_{m}"));
    }
    out.push('\n');
    for (space, set) in [("raw", &lines.raw), ("whitened", &lines.whitened)] {
        for (label, w) in [
            ("ols_target", &set.ols_target),
            ("ols_plim", &set.ols_plim),
            ("tls_target", &set.tls_target),
            ("tls_plim", &set.tls_plim),
        ] {
            out.push_str(&format!("{space},{label},{}", lines.units_per_experiment));
            for v in w.iter() {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
    }
    out
}
