//! Structural scenarios and the named presets.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::effects::PanelDims;
use crate::error::{Error, Result};
use crate::linalg::{sorted_eigenvalues, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `τ_Y(t) = τ_S(t)ᵀβ`: the secondary metrics fully mediate the effect.
    NoDirectEffects,
    /// Direct effects on `Y` orthogonal to the first-stage effects on `S`.
    InsideDirectEffects,
    /// `Y = μ_Y + h(S) + ε` with a quadratic structural function `h`.
    NpivNonlinear,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::NoDirectEffects => "no_direct_effects",
            ScenarioKind::InsideDirectEffects => "inside_direct_effects",
            ScenarioKind::NpivNonlinear => "npiv_nonlinear",
        })
    }
}

/// Experiment-level intercepts `μ(t) ~ N(mean, diag(sd²))`, drawn once per
/// panel, one per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedEffects {
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
}

impl FixedEffects {
    pub fn zero(num_metrics: usize) -> Self {
        Self { mean: DVector::zeros(num_metrics), sd: DVector::zeros(num_metrics) }
    }
}

/// `h(s) = gradientᵀ s + ½ sᵀ hessian s`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFunction {
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl QuadraticFunction {
    pub fn value(&self, s: &[f64]) -> f64 {
        let s = DVector::from_column_slice(s);
        self.gradient.dot(&s) + 0.5 * s.dot(&(&self.hessian * &s))
    }

    pub fn gradient_at(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.gradient + &self.hessian * s
    }

    /// Nuclear norm of the Hessian, the curvature bound `M`.
    pub fn curvature_bound(&self) -> f64 {
        sorted_eigenvalues(&self.hessian).iter().map(|v| v.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpivSpec {
    pub h: QuadraticFunction,
    /// Bound on `‖τ_S(t)‖₂`.
    pub epsilon: f64,
}

/// Everything needed to generate panels and run a Monte Carlo study.
///
/// `lambda_truth` depends on `kind`:
/// * `NoDirectEffects`: `(G−1)×(G−1)` covariance of `τ_S`;
/// * `InsideDirectEffects`: `G×G` joint covariance of `[τ_Y, τ_S]`;
/// * `NpivNonlinear`: `(G−1)×(G−1)` shape of the first-stage effects before
///   they are centered and rescaled to norm at most `ε`.
///
/// `omega` is the composite unit-level noise covariance (confounder and
/// idiosyncratic terms folded together). It only needs to be PSD here; the
/// estimators that use it require it to be positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralScenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub dims: PanelDims,
    pub metric_names: Vec<String>,
    pub beta: DVector<f64>,
    pub lambda_truth: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub fixed_effects: FixedEffects,
    pub replications: usize,
    pub seed: u64,
    pub npiv: Option<NpivSpec>,
}

/// Description of one built-in scenario.
#[derive(Debug, Clone, Copy)]
pub struct PresetInfo {
    pub name: &'static str,
    pub summary: &'static str,
}

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "appendix-figure-setup",
        summary: "two metrics, Λ = 1e-3·[[1,-0.25],[-0.25,1]], Ω = [[1,0.4],[0.4,1]]; K=500, n=100, R=500",
    },
    PresetInfo {
        name: "appendix-no-direct",
        summary: "three metrics, τ_S standard normal, τ_Y = τ_Sᵀβ, β = [-0.4, 0.04]; K=200, n=5000, R=200",
    },
    PresetInfo {
        name: "appendix-direct",
        summary: "three metrics, joint [τ_Y, τ_S] normal with exact INSIDE direct effects, β = [-0.4, 0.04]; K=200, n=5000, R=200",
    },
    PresetInfo {
        name: "npiv-quadratic",
        summary: "three metrics, quadratic structural function, centered first-stage effects with norm ≤ ε = 0.1; K=200, n=1000, R=50",
    },
];

fn appendix_omega() -> DMatrix<f64> {
    let v = [0.01_f64.sqrt(), 10.0_f64.sqrt(), 5.0];
    let corr = [[1.0, 0.8, 0.0], [0.8, 1.0, -0.1], [0.0, -0.1, 1.0]];
    DMatrix::from_fn(3, 3, |i, j| v[i] * v[j] * corr[i][j])
}

fn names(g: usize) -> Vec<String> {
    if g == 2 {
        return vec!["Y".into(), "S".into()];
    }
    std::iter::once("Y".to_string()).chain((1..g).map(|j| format!("S{j}"))).collect()
}

impl StructuralScenario {
    /// Built-in scenario by name.
    pub fn preset(name: &str) -> Result<Self> {
        let beta3 = DVector::from_row_slice(&[-0.4, 0.04]);
        let scenario = match name {
            "appendix-figure-setup" => Self {
                name: name.into(),
                kind: ScenarioKind::InsideDirectEffects,
                dims: PanelDims::new(500, 2, 100)?,
                metric_names: names(2),
                beta: DVector::from_row_slice(&[-0.25]),
                lambda_truth: DMatrix::from_row_slice(2, 2, &[1.0, -0.25, -0.25, 1.0]) * 1e-3,
                omega: DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]),
                fixed_effects: FixedEffects::zero(2),
                replications: 500,
                seed: 20_240_601,
                npiv: None,
            },
            "appendix-no-direct" => Self {
                name: name.into(),
                kind: ScenarioKind::NoDirectEffects,
                dims: PanelDims::new(200, 3, 5000)?,
                metric_names: names(3),
                beta: beta3,
                lambda_truth: DMatrix::identity(2, 2),
                omega: appendix_omega(),
                fixed_effects: FixedEffects::zero(3),
                replications: 200,
                seed: 20_240_602,
                npiv: None,
            },
            "appendix-direct" => Self {
                name: name.into(),
                kind: ScenarioKind::InsideDirectEffects,
                dims: PanelDims::new(200, 3, 5000)?,
                metric_names: names(3),
                beta: beta3,
                lambda_truth: DMatrix::from_row_slice(3, 3, &[1.0, -0.4, 0.04, -0.4, 1.0, 0.0, 0.04, 0.0, 1.0]),
                omega: appendix_omega(),
                fixed_effects: FixedEffects::zero(3),
                replications: 200,
                seed: 20_240_603,
                npiv: None,
            },
            "npiv-quadratic" => Self {
                name: name.into(),
                kind: ScenarioKind::NpivNonlinear,
                dims: PanelDims::new(200, 3, 1000)?,
                metric_names: names(3),
                beta: beta3.clone(),
                lambda_truth: DMatrix::identity(2, 2),
                omega: appendix_omega() * 1e-2,
                fixed_effects: FixedEffects {
                    mean: DVector::from_row_slice(&[1.0, 0.5, -0.5]),
                    sd: DVector::from_row_slice(&[0.2, 0.3, 0.3]),
                },
                replications: 50,
                seed: 20_240_604,
                npiv: Some(NpivSpec {
                    h: QuadraticFunction {
                        gradient: beta3,
                        hessian: DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.3, -0.5]),
                    },
                    epsilon: 0.1,
                }),
            },
            other => {
                let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
                return Err(Error::InvalidInput(format!(
                    "unknown scenario '{other}'; known presets: {}",
                    known.join(", ")
                )));
            }
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Same scenario at the large grid: `K = 1000`, `R = 5000`, `n = 10000`.
    pub fn at_full_scale(mut self) -> Result<Self> {
        self.dims = PanelDims::new(1000, self.dims.num_metrics, 10_000)?;
        self.replications = 5000;
        Ok(self)
    }

    pub fn with_units_per_experiment(mut self, n: usize) -> Result<Self> {
        self.dims = PanelDims::new(self.dims.num_experiments, self.dims.num_metrics, n)?;
        Ok(self)
    }

    pub fn with_num_experiments(mut self, k: usize) -> Result<Self> {
        self.dims = PanelDims::new(k, self.dims.num_metrics, self.dims.units_per_experiment)?;
        Ok(self)
    }

    pub fn with_replications(mut self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidInput("replications must be at least 1".into()));
        }
        self.replications = r;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn num_metrics(&self) -> usize {
        self.dims.num_metrics
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.dims.num_metrics;
        let s = g - 1;
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be at least 1".into()));
        }
        if self.metric_names.len() != g {
            return Err(Error::Dimension(format!("{} metric names for G = {g}", self.metric_names.len())));
        }
        if self.beta.len() != s {
            return Err(Error::Dimension(format!("beta has {} entries, expected G − 1 = {s}", self.beta.len())));
        }
        let lambda_dim = match self.kind {
            ScenarioKind::InsideDirectEffects => g,
            _ => s,
        };
        check_psd("lambda", &self.lambda_truth, lambda_dim)?;
        check_psd("omega", &self.omega, g)?;
        if self.fixed_effects.mean.len() != g || self.fixed_effects.sd.len() != g {
            return Err(Error::Dimension(format!("fixed effects must have {g} entries")));
        }
        if self.fixed_effects.sd.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput("fixed-effect standard deviations must be non-negative".into()));
        }
        match (&self.kind, &self.npiv) {
            (ScenarioKind::NpivNonlinear, Some(spec)) => {
                if spec.h.gradient.len() != s || spec.h.hessian.shape() != (s, s) {
                    return Err(Error::Dimension(format!("structural function must act on {s} secondary metrics")));
                }
                if (&spec.h.hessian - spec.h.hessian.transpose()).amax() > 1e-12 * spec.h.hessian.amax().max(1.0) {
                    return Err(Error::InvalidInput("Hessian must be symmetric".into()));
                }
                if !(spec.epsilon > 0.0 && spec.epsilon.is_finite()) {
                    return Err(Error::InvalidInput("epsilon must be positive".into()));
                }
            }
            (ScenarioKind::NpivNonlinear, None) => {
                return Err(Error::InvalidInput("npiv_nonlinear scenario needs a structural function".into()))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidInput(format!("{} scenario cannot carry a structural function", self.kind)))
            }
            _ => {}
        }
        Ok(())
    }

    /// Population covariance of `[τ_Y, τ_S]` implied by the scenario, when it
    /// has a closed form (linear kinds only).
    pub fn population_lambda(&self) -> Option<DMatrix<f64>> {
        match self.kind {
            ScenarioKind::InsideDirectEffects => Some(symmetrize(&self.lambda_truth)),
            ScenarioKind::NoDirectEffects => {
                let g = self.num_metrics();
                let ss = &self.lambda_truth;
                let sy = ss * &self.beta;
                let mut full = DMatrix::zeros(g, g);
                full[(0, 0)] = self.beta.dot(&sy);
                full.view_mut((1, 0), (g - 1, 1)).copy_from(&sy);
                full.view_mut((0, 1), (1, g - 1)).copy_from(&sy.transpose());
                full.view_mut((1, 1), (g - 1, g - 1)).copy_from(ss);
                Some(full)
            }
            ScenarioKind::NpivNonlinear => None,
        }
    }
}

fn check_psd(what: &str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.shape() != (dim, dim) {
        return Err(Error::Dimension(format!("{what} must be {dim}×{dim}, got {}×{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} contains non-finite values")));
    }
    let scale = m.amax();
    if (m - m.transpose()).amax() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput(format!("{what} is not symmetric")));
    }
    let smallest = sorted_eigenvalues(m)[0];
    if smallest < -1e-12 * scale {
        return Err(Error::NotPositiveDefinite(format!("{what} has negative eigenvalue {smallest:e}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            let s = StructuralScenario::preset(p.name).unwrap();
            assert_eq!(s.name, p.name);
        }
        assert!(StructuralScenario::preset("nope").is_err());
    }

    #[test]
    fn appendix_omega_entries() {
        let o = appendix_omega();
        assert!((o[(0, 0)] - 0.01).abs() < 1e-15);
        assert!((o[(1, 1)] - 10.0).abs() < 1e-12);
        assert!((o[(2, 2)] - 25.0).abs() < 1e-12);
        assert!((o[(0, 1)] - 0.8 * 0.1 * 10.0_f64.sqrt()).abs() < 1e-15);
        assert!((o[(1, 2)] + 0.1 * 10.0_f64.sqrt() * 5.0).abs() < 1e-12);
        assert_eq!(o[(0, 2)], 0.0);
    }

    #[test]
    fn no_direct_population_lambda() {
        let s = StructuralScenario::preset("appendix-no-direct").unwrap();
        let l = s.population_lambda().unwrap();
        assert!((l[(0, 0)] - (0.16 + 0.0016)).abs() < 1e-15);
        assert!((l[(1, 0)] + 0.4).abs() < 1e-15);
        assert!((l[(0, 2)] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn zero_replications_rejected() {
        let s = StructuralScenario::preset("appendix-direct").unwrap();
        assert!(s.clone().with_replications(0).is_err());
        let mut bad = s;
        bad.beta = DVector::zeros(3);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn curvature_bound_is_nuclear_norm() {
        let h = QuadraticFunction {
            gradient: DVector::zeros(2),
            hessian: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -3.0]),
        };
        assert!((h.curvature_bound() - 5.0).abs() < 1e-12);
        assert!((h.value(&[1.0, 1.0]) - (1.0 - 1.5)).abs() < 1e-15);
    }
}
