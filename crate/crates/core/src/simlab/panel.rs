//! Panel generation: ground-truth effects, unit-level draws and an exact
//! sufficient-statistic sampler for Gaussian linear scenarios.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};

use crate::effects::TrueEffects;
use crate::error::{Error, Result};
use crate::estimators::{CellAggregate, ExperimentAggregate, UnitTable};
use crate::linalg::psd_factor;
use crate::simlab::scenario::{ScenarioKind, StructuralScenario};

/// Ground truth of one simulated panel.
#[derive(Debug, Clone)]
pub struct PanelTruth {
    /// `τ(t)` rows, `[τ_Y, τ_S]`.
    pub effects: TrueEffects,
    /// `μ(t)` rows, one intercept per metric.
    pub fixed_effects: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub truth: PanelTruth,
    pub units: UnitTable,
}

#[derive(Debug, Clone)]
pub struct SimulatedAggregates {
    pub truth: PanelTruth,
    pub aggregates: Vec<ExperimentAggregate>,
}

/// Independent stream for replication `rep` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Zero-padded so lexical order equals index order.
pub fn experiment_id(t: usize, num_experiments: usize) -> String {
    let width = num_experiments.saturating_sub(1).to_string().len();
    format!("exp{t:0width$}")
}

fn normal_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Draws `τ(t)` and `μ(t)` for every experiment.
pub fn draw_truth<R: Rng>(scenario: &StructuralScenario, rng: &mut R) -> Result<PanelTruth> {
    let k = scenario.dims.num_experiments;
    let g = scenario.num_metrics();
    let factor = psd_factor(&scenario.lambda_truth);
    let mut tau = DMatrix::zeros(k, g);
    match scenario.kind {
        ScenarioKind::NoDirectEffects => {
            for t in 0..k {
                let ts = &factor * normal_vector(rng, g - 1);
                tau[(t, 0)] = ts.dot(&scenario.beta);
                tau.view_mut((t, 1), (1, g - 1)).copy_from(&ts.transpose());
            }
        }
        ScenarioKind::InsideDirectEffects => {
            for t in 0..k {
                let row = &factor * normal_vector(rng, g);
                tau.set_row(t, &row.transpose());
            }
            let pi_s = tau.columns(1, g - 1).into_owned();
            let direct = tau.column(0) - &pi_s * &scenario.beta;
            let mut design = DMatrix::from_element(k, g, 1.0);
            design.view_mut((0, 1), (k, g - 1)).copy_from(&pi_s);
            let direct = orthogonal_residual(&design, direct);
            tau.set_column(0, &(&pi_s * &scenario.beta + direct));
        }
        ScenarioKind::NpivNonlinear => {
            let spec = scenario.npiv.as_ref().expect("validated scenario");
            let pi = npiv_first_stage(&factor, k, spec.epsilon, rng)?;
            tau.view_mut((0, 1), (k, g - 1)).copy_from(&pi);
        }
    }
    let fe = &scenario.fixed_effects;
    let mut mu = DMatrix::zeros(k, g);
    for t in 0..k {
        for j in 0..g {
            let z: f64 = rng.sample(StandardNormal);
            mu[(t, j)] = fe.mean[j] + fe.sd[j] * z;
        }
    }
    if let (ScenarioKind::NpivNonlinear, Some(spec)) = (scenario.kind, &scenario.npiv) {
        // E[h(S(t,1))] − E[h(S(t,0))] with S(t,0) centred at μ_S(t): the noise
        // terms cancel and the effect is πᵀ∇h(μ_S) + ½ πᵀHπ.
        for t in 0..k {
            let pi = tau.view((t, 1), (1, g - 1)).transpose();
            let mu_s = DVector::from_iterator(g - 1, mu.row(t).iter().skip(1).copied());
            tau[(t, 0)] = pi.dot(&spec.h.gradient_at(&mu_s)) + 0.5 * pi.dot(&(&spec.h.hessian * &pi));
        }
    }
    Ok(PanelTruth { effects: TrueEffects::new(tau)?, fixed_effects: mu })
}

/// Residual of `y` after projecting on the columns of `x`, re-orthogonalized
/// once to push the inner products down to roundoff.
fn orthogonal_residual(x: &DMatrix<f64>, y: DVector<f64>) -> DVector<f64> {
    if x.nrows() <= x.ncols() {
        return DVector::zeros(y.len());
    }
    let q = x.clone().qr().q();
    let mut r = y;
    for _ in 0..2 {
        let coef = q.tr_mul(&r);
        r -= &q * coef;
    }
    r
}

/// Skewed first-stage effects, centred across experiments and scaled so the
/// largest row norm equals `epsilon`.
fn npiv_first_stage<R: Rng>(factor: &DMatrix<f64>, k: usize, epsilon: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let s = factor.nrows();
    let mut pi = DMatrix::zeros(k, s);
    for t in 0..k {
        let u = DVector::from_fn(s, |_, _| {
            let e: f64 = rng.sample(Exp1);
            e - 1.0
        });
        pi.set_row(t, &(factor * u).transpose());
    }
    let mean = pi.row_mean();
    for mut row in pi.row_iter_mut() {
        row -= &mean;
    }
    let largest = pi.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    if largest <= 0.0 {
        return Err(Error::InvalidInput("first-stage effects are identically zero".into()));
    }
    Ok(pi * (epsilon / largest))
}

/// Per-unit means of the two cells of experiment `t`, `[control, treatment]`.
/// Linear kinds use `μ ∓ τ/2`; the nonlinear kind draws `S` around `μ_S` and
/// `μ_S + π` and applies `h` per unit, so only the `S` part is returned.
fn cell_means(scenario: &StructuralScenario, truth: &PanelTruth, t: usize) -> [DVector<f64>; 2] {
    let mu = truth.fixed_effects.row(t).transpose();
    let tau = truth.effects.matrix().row(t).transpose();
    match scenario.kind {
        ScenarioKind::NpivNonlinear => {
            let mut treated = mu.clone();
            for j in 1..tau.len() {
                treated[j] += tau[j];
            }
            [mu, treated]
        }
        _ => [&mu - &tau * 0.5, &mu + &tau * 0.5],
    }
}

/// Unit-level panel: `n/2` units per arm, noise `N(0, Ω)` per unit.
pub fn simulate_panel_with_rng<R: Rng>(scenario: &StructuralScenario, rng: &mut R) -> Result<SimulatedPanel> {
    scenario.validate()?;
    let truth = draw_truth(scenario, rng)?;
    let dims = scenario.dims;
    let (k, g, h) = (dims.num_experiments, dims.num_metrics, dims.arm_size());
    let noise = psd_factor(&scenario.omega);
    let mut units = UnitTable::with_capacity(g, dims.total_units());
    let mut values = DVector::zeros(g);
    for t in 0..k {
        let e = units.add_experiment(experiment_id(t, k));
        let means = cell_means(scenario, &truth, t);
        for (arm, mean) in means.iter().enumerate() {
            for _ in 0..h {
                let z = normal_vector(rng, g);
                values.copy_from(mean);
                values.gemv(1.0, &noise, &z, 1.0);
                if let Some(spec) = &scenario.npiv {
                    let s: Vec<f64> = values.iter().skip(1).copied().collect();
                    values[0] += spec.h.value(&s);
                }
                units.push(e, arm as u8, values.as_slice())?;
            }
        }
    }
    Ok(SimulatedPanel { truth, units })
}

/// Unit-level panel for replication `rep`.
pub fn simulate_panel(scenario: &StructuralScenario, rep: u64) -> Result<SimulatedPanel> {
    simulate_panel_with_rng(scenario, &mut replication_rng(scenario.seed, rep))
}

/// Whether the sufficient-statistic sampler is exact for this scenario.
pub fn supports_exact_aggregates(scenario: &StructuralScenario) -> bool {
    scenario.kind != ScenarioKind::NpivNonlinear && scenario.dims.arm_size() > scenario.num_metrics()
}

/// Per-cell sufficient statistics for replication `rep`. Gaussian linear
/// scenarios draw them directly (`sum ~ N(h·m, hΩ)`, centred scatter
/// `~ Wishart(Ω, h−1)`, independent); everything else aggregates a
/// unit-level panel.
pub fn simulate_aggregates(scenario: &StructuralScenario, rep: u64) -> Result<SimulatedAggregates> {
    let mut rng = replication_rng(scenario.seed, rep);
    if !supports_exact_aggregates(scenario) {
        let panel = simulate_panel_with_rng(scenario, &mut rng)?;
        return Ok(SimulatedAggregates { aggregates: panel.units.aggregate()?, truth: panel.truth });
    }
    scenario.validate()?;
    let truth = draw_truth(scenario, &mut rng)?;
    let dims = scenario.dims;
    let (k, g, h) = (dims.num_experiments, dims.num_metrics, dims.arm_size());
    let noise = psd_factor(&scenario.omega);
    let hf = h as f64;
    let mut aggregates = Vec::with_capacity(k);
    for t in 0..k {
        let means = cell_means(scenario, &truth, t);
        let arms = means.map(|m| {
            let sum = &m * hf + &noise * normal_vector(&mut rng, g) * hf.sqrt();
            let a = bartlett_factor(&mut rng, g, h - 1);
            let fa = &noise * a;
            let cross = &fa * fa.transpose() + &sum * sum.transpose() / hf;
            CellAggregate { count: h as u64, sum, cross }
        });
        aggregates.push(ExperimentAggregate { experiment_id: experiment_id(t, k), arms });
    }
    Ok(SimulatedAggregates { truth, aggregates })
}

/// Lower-triangular `A` with `AAᵀ ~ Wishart(I, dof)`; needs `dof ≥ dim`.
fn bartlett_factor<R: Rng>(rng: &mut R, dim: usize, dof: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new((dof - i) as f64).expect("positive degrees of freedom");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    a
}
