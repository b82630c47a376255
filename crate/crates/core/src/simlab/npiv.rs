//! Gap between the OLS estimand and the instrument-strength-weighted average
//! gradient of a quadratic structural function.
//!
//! With `S(t,0)` centred at `μ_S(t)` and `S(t,1)` at `μ_S(t) + π(t)`,
//! `τ_Y(t) = π(t)ᵀ∇h(μ_S(t)) + ½ π(t)ᵀHπ(t)` exactly, so
//!
//! ```text
//! θ₁ − target = ½ (Σ_t ππᵀ)⁻¹ Σ_t π (πᵀHπ)
//! ```
//!
//! which is homogeneous of degree one in the scale of `π` and vanishes for
//! `H = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::effects::{cov_of_effects, theta1, SS_CONDITION_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::sorted_eigenvalues;
use crate::simlab::panel::{draw_truth, replication_rng, PanelTruth};
use crate::simlab::scenario::{ScenarioKind, StructuralScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpivGap {
    pub epsilon: f64,
    pub theta1: DVector<f64>,
    pub target: DVector<f64>,
    /// `‖θ₁ − target‖₂`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpivReport {
    /// Nuclear norm of the Hessian.
    pub curvature_bound: f64,
    /// Gaps at `ε`, `ε/2` and `ε/4`, on the same underlying draws.
    pub gaps: [NpivGap; 3],
    /// `gap(ε/2) / gap(ε)`; absent when `gap(ε)` is zero.
    pub ratio_half: Option<f64>,
    /// `gap(ε/4) / gap(ε)`.
    pub ratio_quarter: Option<f64>,
}

/// `(Σ_t ππᵀ)⁻¹ Σ_t ππᵀ E[∇h(S(t,0))]`.
fn weighted_gradient(scenario: &StructuralScenario, truth: &PanelTruth) -> Result<DVector<f64>> {
    let spec = scenario.npiv.as_ref().expect("validated npiv scenario");
    let g = scenario.num_metrics();
    let tau = truth.effects.matrix();
    let mut strength = DMatrix::zeros(g - 1, g - 1);
    let mut weighted = DVector::zeros(g - 1);
    for t in 0..tau.nrows() {
        let pi = tau.view((t, 1), (1, g - 1)).transpose();
        let mu_s = DVector::from_iterator(g - 1, truth.fixed_effects.row(t).iter().skip(1).copied());
        let outer = &pi * pi.transpose();
        weighted += &outer * spec.h.gradient_at(&mu_s);
        strength += outer;
    }
    let eig = sorted_eigenvalues(&strength);
    let largest = eig[eig.len() - 1];
    if eig[0] <= SS_CONDITION_FLOOR * largest {
        return Err(Error::Conditioning { eigenvalue: eig[0], largest });
    }
    strength.lu().solve(&weighted).ok_or(Error::Conditioning { eigenvalue: eig[0], largest })
}

fn gap_at(scenario: &StructuralScenario, epsilon: f64) -> Result<NpivGap> {
    let mut s = scenario.clone();
    s.npiv.as_mut().expect("validated npiv scenario").epsilon = epsilon;
    let truth = draw_truth(&s, &mut replication_rng(s.seed, 0))?;
    let theta1 = theta1(&cov_of_effects(&truth.effects)?)?.weights;
    let target = weighted_gradient(&s, &truth)?;
    Ok(NpivGap { epsilon, gap: (&theta1 - &target).norm(), theta1, target })
}

/// Exact (noise-free) gap at `ε`, `ε/2` and `ε/4` for an `npiv_nonlinear`
/// scenario. The first-stage shape and the fixed effects are the same draws at
/// every scale.
pub fn npiv_gradient_check(scenario: &StructuralScenario) -> Result<NpivReport> {
    scenario.validate()?;
    if scenario.kind != ScenarioKind::NpivNonlinear {
        return Err(Error::UnsupportedDesign(format!(
            "gradient check needs an npiv_nonlinear scenario, got {}",
            scenario.kind
        )));
    }
    let spec = scenario.npiv.as_ref().expect("validated npiv scenario");
    let eps = spec.epsilon;
    let gaps = [gap_at(scenario, eps)?, gap_at(scenario, eps / 2.0)?, gap_at(scenario, eps / 4.0)?];
    let ratio = |i: usize| (gaps[0].gap > 0.0).then(|| gaps[i].gap / gaps[0].gap);
    Ok(NpivReport { curvature_bound: spec.h.curvature_bound(), ratio_half: ratio(1), ratio_quarter: ratio(2), gaps })
}
