//! The estimate report: JSON document plus a plain-text rendering.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::effects::{Estimand, Provenance};
use crate::estimators::Method;
use crate::io::format::fmt_f64;
use crate::io::units::IngestSummary;

/// Square matrix with metric names; `rows` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl LabeledMatrix {
    pub fn new(names: &[String], m: &DMatrix<f64>) -> Self {
        Self { names: names.to_vec(), rows: m.row_iter().map(|r| r.iter().copied().collect()).collect() }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let g = self.rows.len();
        DMatrix::from_fn(g, g, |i, j| self.rows[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Units,
    Aggregates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEcho {
    pub path: String,
    pub kind: InputKind,
    pub sha256: String,
    pub summary: IngestSummary,
}

/// Where `Ω` came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum OmegaSource {
    /// User-supplied matrix file.
    File { path: String, sha256: String },
    /// Pooled within-cell covariance of the metrics (divisor `N`).
    PooledWithinCell,
    /// Within-experiment scatter of the signed outcomes over `N`, the matrix
    /// that makes the k-class and total-covariance estimators coincide.
    WithinExperimentTilde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub method: Method,
    pub primary_metric: String,
    pub metric_names: Vec<String>,
    pub units_per_experiment: usize,
    pub omega_source: Option<OmegaSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsBlock {
    pub estimand: Estimand,
    /// Secondary metrics the weights apply to, in order.
    pub metrics: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub indefinite: bool,
    /// Eigenvalues of the reported covariance, ascending.
    pub eigenvalues: Vec<f64>,
    pub kappa: Option<f64>,
    pub residual_norm: Option<f64>,
    pub gamma_y: Option<f64>,
    pub omega_condition_number: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    /// RFC 3339 timestamp; the only field that varies between identical runs
    /// unless `SOURCE_DATE_EPOCH` pins it.
    pub generated_at: String,
    pub input: InputEcho,
    pub config: ConfigEcho,
    pub lambda: LabeledMatrix,
    pub lambda_provenance: Provenance,
    pub weights: WeightsBlock,
    pub diagnostics: Diagnostics,
    pub omega: Option<LabeledMatrix>,
    pub warnings: Vec<String>,
    pub interpretation: Vec<String>,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let cfg = &self.config;
        let _ = writeln!(out, "{} {}", self.tool, self.version);
        let _ = writeln!(out, "generated_at: {}", self.generated_at);
        let kind = match self.input.kind {
            InputKind::Units => "units",
            InputKind::Aggregates => "aggregates",
        };
        let _ = writeln!(out, "input: {} ({kind}, sha256 {})", self.input.path, self.input.sha256);
        let s = &self.input.summary;
        let _ = writeln!(
            out,
            "rows: {}  K: {}  G: {}  n: {}",
            s.rows, s.num_experiments, s.num_metrics, s.units_per_experiment
        );
        let _ = writeln!(out, "method: {}  primary metric: {}", cfg.method, cfg.primary_metric);
        if let Some(src) = &cfg.omega_source {
            let _ = writeln!(out, "omega: {}", omega_source_text(src));
        }
        let _ = writeln!(out, "\ncovariance of true effects ({}):", self.lambda_provenance);
        write_matrix(&mut out, &self.lambda);
        let _ = writeln!(out, "\nweights ({}):", self.weights.estimand);
        for (m, v) in self.weights.metrics.iter().zip(&self.weights.values) {
            let _ = writeln!(out, "  {m}: {}", fmt_f64(*v));
        }
        let d = &self.diagnostics;
        let _ = writeln!(out, "\ndiagnostics:");
        let _ = writeln!(out, "  indefinite: {}", d.indefinite);
        let eig: Vec<String> = d.eigenvalues.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "  eigenvalues: {}", eig.join(" "));
        for (label, v) in [
            ("kappa", d.kappa),
            ("residual_norm", d.residual_norm),
            ("gamma_y", d.gamma_y),
            ("omega_condition_number", d.omega_condition_number),
        ] {
            if let Some(v) = v {
                let _ = writeln!(out, "  {label}: {}", fmt_f64(v));
            }
        }
        if let Some(omega) = &self.omega {
            let _ = writeln!(out, "\nomega:");
            write_matrix(&mut out, omega);
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(out, "\nwarnings:");
            for w in &self.warnings {
                let _ = writeln!(out, "  - {w}");
            }
        }
        let _ = writeln!(out, "\ninterpretation:");
        for p in &self.interpretation {
            let _ = writeln!(out, "  {p}");
        }
        out
    }
}

fn omega_source_text(src: &OmegaSource) -> String {
    match src {
        OmegaSource::File { path, sha256 } => format!("file {path} (sha256 {sha256})"),
        OmegaSource::PooledWithinCell => "pooled within-cell covariance of the input".into(),
        OmegaSource::WithinExperimentTilde => "within-experiment scatter of signed outcomes (k-class identity)".into(),
    }
}

fn write_matrix(out: &mut String, m: &LabeledMatrix) {
    let width = m.names.iter().map(String::len).max().unwrap_or(0);
    for (name, row) in m.names.iter().zip(&m.rows) {
        let cells: Vec<String> = row.iter().map(|v| format!("{:>24}", fmt_f64(*v))).collect();
        let _ = writeln!(out, "  {name:<width$} {}", cells.join(" "));
    }
}

/// Plain-language reading of the weights, including the causal caveat.
pub fn interpretation(method: Method, primary: &str, secondary: &[String], indefinite: bool) -> Vec<String> {
    let s = secondary.join(", ");
    let mut lines = match method {
        Method::Limlk => vec![
            format!(
                "These weights come from the smallest generalized eigenvector of the estimated effect covariance \
                 relative to the noise covariance (total least squares after whitening). They are not a \
                 best linear predictor of the {primary} effect from the effects on {s}."
            ),
            format!(
                "They estimate the causal effect of {s} on {primary} only when the interventions move {primary} \
                 exclusively through {s}. If interventions also have direct effects on {primary}, even ones \
                 orthogonal to their effects on {s}, these weights are inconsistent for it."
            ),
        ],
        _ => vec![
            format!(
                "These weights regress true {primary} effects on true effects on {s} across experiments. \
                 Applied to a new experiment from the same population, the weighted sum of its {s} effects is the \
                 best linear predictor of its {primary} effect, i.e. a surrogate index."
            ),
            format!(
                "Reading the weights as the causal effect of {s} on {primary} (the part of the effect mediated \
                 by {s}) additionally requires that any direct effects of the interventions on {primary} are \
                 uncorrelated with their effects on {s}. Without that, use them only as a predictive surrogate."
            ),
        ],
    };
    if method == Method::Naive {
        lines.push(
            "The naive covariance includes estimation noise of order (4/n)·Ω, which biases these weights toward \
             the noise regression; prefer tc, jackknife or kclass when experiments are weak."
                .into(),
        );
    }
    if indefinite {
        lines.push(
            "The bias-corrected covariance is indefinite: sampling noise dominates the signal in at least one \
             direction, so the weights are unreliable."
                .into(),
        );
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReportDocument {
        let names = vec!["Y".to_string(), "S".to_string()];
        let m = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, 1.0 / 3.0, 7e-301]);
        ReportDocument {
            tool: "effcov".into(),
            version: "0.1.0".into(),
            generated_at: "2026-01-01T00:00:00Z".into(),
            input: InputEcho {
                path: "x.csv".into(),
                kind: InputKind::Units,
                sha256: "00".into(),
                summary: IngestSummary { rows: 4, num_experiments: 2, num_metrics: 2, units_per_experiment: 2 },
            },
            config: ConfigEcho {
                method: Method::Tc,
                primary_metric: "Y".into(),
                metric_names: names.clone(),
                units_per_experiment: 2,
                omega_source: Some(OmegaSource::File { path: "o.csv".into(), sha256: "ab".into() }),
            },
            lambda: LabeledMatrix::new(&names, &m),
            lambda_provenance: Provenance::Tc,
            weights: WeightsBlock { estimand: Estimand::OlsTheta1, metrics: vec!["S".into()], values: vec![0.1 + 0.2] },
            diagnostics: Diagnostics {
                indefinite: false,
                eigenvalues: vec![-1e-17, 0.5],
                kappa: None,
                residual_norm: None,
                gamma_y: None,
                omega_condition_number: Some(2.333),
            },
            omega: Some(LabeledMatrix::new(&names, &m)),
            warnings: vec!["w".into()],
            interpretation: interpretation(Method::Tc, "Y", &["S".to_string()], false),
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let r = sample();
        let back = ReportDocument::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.lambda.to_matrix()[(1, 1)], 7e-301);
    }

    #[test]
    fn text_lists_weights_and_caveat() {
        let t = sample().render_text();
        assert!(t.contains("S: 3.0000000000000004e-1"));
        assert!(t.contains("surrogate index"));
        assert!(t.contains("omega: file o.csv"));
    }

    #[test]
    fn interpretation_flags_method_specifics() {
        let s = vec!["S".to_string()];
        assert!(interpretation(Method::Limlk, "Y", &s, false)[1].contains("inconsistent"));
        assert_eq!(interpretation(Method::Naive, "Y", &s, true).len(), 4);
    }
}
