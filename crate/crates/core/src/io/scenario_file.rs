//! TOML scenario files.
//!
//! A file either starts from a preset and overrides some fields, or spells
//! out a full scenario:
//!
//! ```toml
//! preset = "appendix-direct"   # optional base
//! name = "direct-small"
//! kind = "inside_direct_effects"
//! num_experiments = 100
//! units_per_experiment = 2000
//! replications = 50
//! seed = 7
//! metric_names = ["Y", "S1", "S2"]
//! beta = [-0.4, 0.04]
//! lambda = [[1.0, -0.4, 0.04], [-0.4, 1.0, 0.0], [0.04, 0.0, 1.0]]
//! omega = [[0.01, 0.25, 0.0], [0.25, 10.0, -1.58], [0.0, -1.58, 25.0]]
//!
//! [fixed_effects]
//! mean = [0.0, 0.0, 0.0]
//! sd = [0.0, 0.0, 0.0]
//!
//! [npiv]                        # npiv_nonlinear only
//! gradient = [-0.4, 0.04]
//! hessian = [[0.8, 0.3], [0.3, -0.5]]
//! epsilon = 0.1
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::effects::PanelDims;
use crate::error::{Error, Result};
use crate::simlab::{FixedEffects, NpivSpec, QuadraticFunction, ScenarioKind, StructuralScenario};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub name: Option<String>,
    pub kind: Option<ScenarioKind>,
    pub num_experiments: Option<usize>,
    pub units_per_experiment: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub metric_names: Option<Vec<String>>,
    pub beta: Option<Vec<f64>>,
    pub lambda: Option<Vec<Vec<f64>>>,
    pub omega: Option<Vec<Vec<f64>>>,
    pub fixed_effects: Option<FixedEffectsFile>,
    pub npiv: Option<NpivFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedEffectsFile {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpivFile {
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub epsilon: f64,
}

fn to_matrix(what: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if rows.iter().any(|row| row.len() != r) {
        return Err(Error::Dimension(format!("{what} must be a square array of rows")));
    }
    Ok(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn required<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::Schema(format!("scenario file is missing '{field}' (and has no preset to inherit it from)")))
}

impl ScenarioFile {
    pub fn from_scenario(s: &StructuralScenario) -> Self {
        Self {
            preset: None,
            name: Some(s.name.clone()),
            kind: Some(s.kind),
            num_experiments: Some(s.dims.num_experiments),
            units_per_experiment: Some(s.dims.units_per_experiment),
            replications: Some(s.replications),
            seed: Some(s.seed),
            metric_names: Some(s.metric_names.clone()),
            beta: Some(s.beta.iter().copied().collect()),
            lambda: Some(from_matrix(&s.lambda_truth)),
            omega: Some(from_matrix(&s.omega)),
            fixed_effects: Some(FixedEffectsFile {
                mean: s.fixed_effects.mean.iter().copied().collect(),
                sd: s.fixed_effects.sd.iter().copied().collect(),
            }),
            npiv: s.npiv.as_ref().map(|n| NpivFile {
                gradient: n.h.gradient.iter().copied().collect(),
                hessian: from_matrix(&n.h.hessian),
                epsilon: n.epsilon,
            }),
        }
    }

    pub fn into_scenario(self) -> Result<StructuralScenario> {
        let base = self.preset.as_deref().map(StructuralScenario::preset).transpose()?;
        let beta = match (self.beta, &base) {
            (Some(b), _) => DVector::from_vec(b),
            (None, Some(b)) => b.beta.clone(),
            (None, None) => return Err(required::<()>(None, "beta").unwrap_err()),
        };
        let g = beta.len() + 1;
        let pick = |field: &str, v: Option<usize>, from_base: fn(&StructuralScenario) -> usize| -> Result<usize> {
            match (v, &base) {
                (Some(v), _) => Ok(v),
                (None, Some(b)) => Ok(from_base(b)),
                (None, None) => required(None, field),
            }
        };
        let k = pick("num_experiments", self.num_experiments, |b| b.dims.num_experiments)?;
        let n = pick("units_per_experiment", self.units_per_experiment, |b| b.dims.units_per_experiment)?;
        let replications = pick("replications", self.replications, |b| b.replications)?;
        let kind = match (self.kind, &base) {
            (Some(k), _) => k,
            (None, Some(b)) => b.kind,
            (None, None) => required(None, "kind")?,
        };
        let matrix = |what: &str, v: Option<Vec<Vec<f64>>>, from_base: Option<DMatrix<f64>>| match v {
            Some(rows) => to_matrix(what, &rows),
            None => required(from_base, what),
        };
        let lambda_truth = matrix("lambda", self.lambda, base.as_ref().map(|b| b.lambda_truth.clone()))?;
        let omega = matrix("omega", self.omega, base.as_ref().map(|b| b.omega.clone()))?;
        let metric_names = match (self.metric_names, &base) {
            (Some(m), _) => m,
            (None, Some(b)) if b.num_metrics() == g => b.metric_names.clone(),
            _ => std::iter::once("Y".to_string()).chain((1..g).map(|j| format!("S{j}"))).collect(),
        };
        let fixed_effects = match (self.fixed_effects, &base) {
            (Some(f), _) => FixedEffects { mean: DVector::from_vec(f.mean), sd: DVector::from_vec(f.sd) },
            (None, Some(b)) if b.num_metrics() == g => b.fixed_effects.clone(),
            _ => FixedEffects::zero(g),
        };
        let npiv = match (self.npiv, &base) {
            (Some(f), _) => Some(NpivSpec {
                h: QuadraticFunction { gradient: DVector::from_vec(f.gradient), hessian: to_matrix("npiv.hessian", &f.hessian)? },
                epsilon: f.epsilon,
            }),
            (None, Some(b)) if kind == ScenarioKind::NpivNonlinear => b.npiv.clone(),
            _ => None,
        };
        let scenario = StructuralScenario {
            name: self.name.or_else(|| base.as_ref().map(|b| b.name.clone())).unwrap_or_else(|| "custom".into()),
            kind,
            dims: PanelDims::new(k, g, n)?,
            metric_names,
            beta,
            lambda_truth,
            omega,
            fixed_effects,
            replications,
            seed: self.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0),
            npiv,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(format!("scenario file: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// A preset name, or a path to a TOML scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<StructuralScenario> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        ScenarioFile::parse(&std::fs::read_to_string(path)?)?.into_scenario()
    } else {
        StructuralScenario::preset(name_or_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::PRESETS;

    #[test]
    fn presets_round_trip_through_toml() {
        for p in PRESETS {
            let s = StructuralScenario::preset(p.name).unwrap();
            let text = ScenarioFile::from_scenario(&s).to_toml();
            let back = ScenarioFile::parse(&text).unwrap().into_scenario().unwrap();
            assert_eq!(back, s, "{}", p.name);
        }
    }

    #[test]
    fn preset_with_overrides() {
        let text = "preset = \"appendix-direct\"\nnum_experiments = 50\nseed = 3\n";
        let s = ScenarioFile::parse(text).unwrap().into_scenario().unwrap();
        assert_eq!(s.dims.num_experiments, 50);
        assert_eq!(s.seed, 3);
        assert_eq!(s.kind, ScenarioKind::InsideDirectEffects);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(ScenarioFile::parse("bogus = 1"), Err(Error::Schema(_))));
        let e = ScenarioFile::parse("beta = [0.5]").unwrap().into_scenario().unwrap_err();
        assert!(e.to_string().contains("num_experiments"), "{e}");
        let text = "beta = [0.5]\nkind = \"no_direct_effects\"\nnum_experiments = 10\nunits_per_experiment = 10\n\
                    replications = 2\nlambda = [[1.0]]\nomega = [[1.0, 0.0], [0.0, 1.0]]\n";
        let s = ScenarioFile::parse(text).unwrap().into_scenario().unwrap();
        assert_eq!(s.metric_names, vec!["Y", "S1"]);
        assert!(load_scenario("not-a-preset").is_err());
    }
}
