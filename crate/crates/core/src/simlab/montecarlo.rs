//! Monte Carlo studies over replicated panels.
//!
//! Replication `r` draws from its own ChaCha8 stream `(seed, r)`, so the
//! results do not depend on how replications are scheduled; the reduction
//! runs in replication order.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effects::{cov_of_effects, NoiseModel};
use crate::error::{Error, Result};
use crate::estimators::{run_method, Method};
use crate::simlab::panel::{simulate_aggregates, simulate_panel};
use crate::simlab::scenario::{ScenarioKind, StructuralScenario};

/// Scenario parameters echoed into every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEcho {
    pub name: String,
    pub kind: ScenarioKind,
    pub num_experiments: usize,
    pub num_metrics: usize,
    pub units_per_experiment: usize,
    pub replications: usize,
    pub seed: u64,
    pub metric_names: Vec<String>,
    pub beta: Vec<f64>,
}

impl ScenarioEcho {
    pub fn of(s: &StructuralScenario) -> Self {
        Self {
            name: s.name.clone(),
            kind: s.kind,
            num_experiments: s.dims.num_experiments,
            num_metrics: s.dims.num_metrics,
            units_per_experiment: s.dims.units_per_experiment,
            replications: s.replications,
            seed: s.seed,
            metric_names: s.metric_names.clone(),
            beta: s.beta.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Method,
    pub successes: usize,
    pub failures: usize,
    pub mean: Option<DVector<f64>>,
    /// Sample SD across replications (divisor `R − 1`).
    pub sd: Option<DVector<f64>>,
    /// `sd / √R`; absent when fewer than two replications succeeded.
    pub mc_se: Option<DVector<f64>>,
    /// `mean − β`.
    pub bias: Option<DVector<f64>>,
    /// Share of successful replications whose covariance estimate was indefinite.
    pub indefinite_frequency: Option<f64>,
    pub first_failure: Option<String>,
}

impl EstimatorSummary {
    /// `bias / mc_se`, entrywise.
    pub fn bias_in_se(&self) -> Option<DVector<f64>> {
        Some(self.bias.as_ref()?.component_div(self.mc_se.as_ref()?))
    }
}

/// Weights of every requested estimator in one replication; `None` marks a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationDraw {
    pub replication: usize,
    pub weights: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub scenario: ScenarioEcho,
    pub estimators: Vec<EstimatorSummary>,
    pub draws: Vec<ReplicationDraw>,
}

impl McResult {
    pub fn summary(&self, method: Method) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == method)
    }
}

struct Outcome {
    weights: Option<DVector<f64>>,
    indefinite: bool,
    error: Option<String>,
}

fn dedup(methods: &[Method]) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in methods {
        if !out.contains(m) {
            out.push(*m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no estimators requested".into()));
    }
    Ok(out)
}

/// Runs `scenario.replications` panels through each method in `methods`.
/// Per-replication estimator failures are counted, not propagated.
pub fn run_monte_carlo(scenario: &StructuralScenario, methods: &[Method]) -> Result<McResult> {
    scenario.validate()?;
    let methods = dedup(methods)?;
    let noise = NoiseModel::new(scenario.omega.clone());
    let needs_units = methods.contains(&Method::Kclass);
    let runs: Vec<Result<Vec<Outcome>>> = (0..scenario.replications)
        .into_par_iter()
        .map(|rep| {
            let (aggs, units) = if needs_units {
                let panel = simulate_panel(scenario, rep as u64)?;
                (panel.units.aggregate()?, Some(panel.units))
            } else {
                (simulate_aggregates(scenario, rep as u64)?.aggregates, None)
            };
            Ok(methods
                .iter()
                .map(|&m| {
                    let noise = match (&noise, m.needs_noise()) {
                        (Ok(nm), _) => Some(nm),
                        (Err(e), true) => {
                            return Outcome { weights: None, indefinite: false, error: Some(e.to_string()) }
                        }
                        (Err(_), false) => None,
                    };
                    match run_method(m, &aggs, units.as_ref(), noise) {
                        Ok(out) => Outcome {
                            indefinite: out.lambda.is_indefinite(),
                            weights: Some(out.weights.weights),
                            error: None,
                        },
                        Err(e) => Outcome { weights: None, indefinite: false, error: Some(e.to_string()) },
                    }
                })
                .collect())
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let estimators = methods
        .iter()
        .enumerate()
        .map(|(i, &m)| summarize(m, runs.iter().map(|r| &r[i]), &scenario.beta))
        .collect();
    let draws = runs
        .iter()
        .enumerate()
        .map(|(rep, r)| ReplicationDraw {
            replication: rep,
            weights: r.iter().map(|o| o.weights.as_ref().map(|w| w.iter().copied().collect())).collect(),
        })
        .collect();
    Ok(McResult { scenario: ScenarioEcho::of(scenario), estimators, draws })
}

fn summarize<'a>(method: Method, outcomes: impl Iterator<Item = &'a Outcome>, beta: &DVector<f64>) -> EstimatorSummary {
    let mut ok = Vec::new();
    let mut indefinite = 0usize;
    let mut failures = 0usize;
    let mut first_failure = None;
    for o in outcomes {
        match &o.weights {
            Some(w) => {
                ok.push(w.clone());
                indefinite += o.indefinite as usize;
            }
            None => {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = o.error.clone();
                }
            }
        }
    }
    let moments = column_moments(&ok);
    let mean = moments.as_ref().map(|m| m.0.clone());
    let sd = moments.and_then(|m| m.1);
    let r = ok.len() as f64;
    EstimatorSummary {
        estimator: method,
        successes: ok.len(),
        failures,
        bias: mean.as_ref().map(|m| m - beta),
        mc_se: sd.as_ref().map(|s| s / r.sqrt()),
        mean,
        sd,
        indefinite_frequency: (!ok.is_empty()).then(|| indefinite as f64 / r),
        first_failure,
    }
}

/// Mean and sample SD (divisor `R − 1`, absent for `R < 2`) of a list of vectors.
fn column_moments(xs: &[DVector<f64>]) -> Option<(DVector<f64>, Option<DVector<f64>>)> {
    let first = xs.first()?;
    let r = xs.len() as f64;
    let mean = xs.iter().fold(DVector::zeros(first.len()), |acc, x| acc + x) / r;
    if xs.len() < 2 {
        return Some((mean, None));
    }
    let ss = xs.iter().fold(DVector::zeros(first.len()), |acc: DVector<f64>, x| {
        let d = x - &mean;
        acc + d.component_mul(&d)
    });
    Some((mean, Some((ss / (r - 1.0)).map(f64::sqrt))))
}

/// Sampling behaviour of a covariance estimator of `Λ_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaStudy {
    pub estimator: Method,
    pub replications: usize,
    /// MC mean of the estimate.
    pub mean_estimate: DMatrix<f64>,
    /// Entrywise MC SE of `mean_estimate`.
    pub se_estimate: Option<DMatrix<f64>>,
    /// MC mean of `estimate − Λ_K`, with `Λ_K` the realized covariance of each panel.
    pub mean_error: DMatrix<f64>,
    pub se_error: Option<DMatrix<f64>>,
    pub indefinite_frequency: f64,
}

impl LambdaStudy {
    /// `‖E[Λ̂ − Λ_K]‖_F` as estimated by the MC mean.
    pub fn frobenius_bias(&self) -> f64 {
        self.mean_error.norm()
    }

    /// Frobenius norm of the entrywise MC SEs of the mean error.
    pub fn frobenius_bias_se(&self) -> Option<f64> {
        self.se_error.as_ref().map(|m| m.norm())
    }
}

/// Replicates `naive`, `jackknife` or `tc` estimates of `Λ_K`. Any estimator
/// failure is fatal here.
pub fn run_lambda_study(scenario: &StructuralScenario, method: Method) -> Result<LambdaStudy> {
    scenario.validate()?;
    if matches!(method, Method::Limlk | Method::Kclass) {
        return Err(Error::InvalidInput(format!("'{method}' does not estimate Λ_K on its own")));
    }
    let noise = if method.needs_noise() { Some(NoiseModel::new(scenario.omega.clone())?) } else { None };
    let g = scenario.num_metrics();
    let reps = scenario.replications;
    let chunks: Vec<Result<[Moments; 2]>> = (0..reps.div_ceil(LAMBDA_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = [Moments::new(g * g), Moments::new(g * g)];
            for rep in c * LAMBDA_CHUNK..((c + 1) * LAMBDA_CHUNK).min(reps) {
                let sim = simulate_aggregates(scenario, rep as u64)?;
                let est = run_method(method, &sim.aggregates, None, noise.as_ref())?.lambda;
                let truth = cov_of_effects(&sim.truth.effects)?;
                acc[0].push(est.matrix().as_slice(), est.is_indefinite());
                acc[1].push((est.matrix() - truth.matrix()).as_slice(), false);
            }
            Ok(acc)
        })
        .collect();
    let mut total = [Moments::new(g * g), Moments::new(g * g)];
    for chunk in chunks {
        let [a, b] = chunk?;
        total[0].merge(&a);
        total[1].merge(&b);
    }
    let unflat = |v: DVector<f64>| DMatrix::from_column_slice(g, g, v.as_slice());
    let [est, err] = total;
    Ok(LambdaStudy {
        estimator: method,
        replications: reps,
        mean_estimate: unflat(est.mean.clone()),
        se_estimate: est.standard_error().map(unflat),
        mean_error: unflat(err.mean.clone()),
        se_error: err.standard_error().map(unflat),
        indefinite_frequency: est.flagged as f64 / reps as f64,
    })
}

/// Replications per work item in [`run_lambda_study`]; fixed so the
/// reduction order, and hence the result, does not depend on thread count.
const LAMBDA_CHUNK: usize = 256;

/// Running mean and sum of squared deviations (Welford), mergeable in order.
struct Moments {
    count: usize,
    mean: DVector<f64>,
    m2: DVector<f64>,
    flagged: usize,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self { count: 0, mean: DVector::zeros(dim), m2: DVector::zeros(dim), flagged: 0 }
    }

    fn push(&mut self, x: &[f64], flag: bool) {
        self.count += 1;
        self.flagged += flag as usize;
        let c = self.count as f64;
        for (j, &v) in x.iter().enumerate() {
            let d = v - self.mean[j];
            self.mean[j] += d / c;
            self.m2[j] += d * (v - self.mean[j]);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        self.m2 += &other.m2 + delta.component_mul(&delta) * (na * nb / n);
        self.mean += delta * (nb / n);
        self.count += other.count;
        self.flagged += other.flagged;
    }

    /// `sd / √count`, with the `count − 1` divisor.
    fn standard_error(&self) -> Option<DVector<f64>> {
        (self.count >= 2).then(|| {
            let c = self.count as f64;
            self.m2.map(|v| (v / (c - 1.0) / c).sqrt())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(name: &str, r: usize) -> StructuralScenario {
        StructuralScenario::preset(name)
            .unwrap()
            .with_num_experiments(30)
            .unwrap()
            .with_units_per_experiment(20)
            .unwrap()
            .with_replications(r)
            .unwrap()
    }

    #[test]
    fn single_replication_has_no_se() {
        let res = run_monte_carlo(&tiny("appendix-direct", 1), &[Method::Naive]).unwrap();
        let s = res.summary(Method::Naive).unwrap();
        assert_eq!(s.successes, 1);
        assert!(s.mean.is_some());
        assert!(s.mc_se.is_none());
        assert!(s.bias_in_se().is_none());
    }

    #[test]
    fn table_covers_requested_set_once() {
        let res = run_monte_carlo(&tiny("appendix-no-direct", 4), &[Method::Tc, Method::Naive, Method::Tc]).unwrap();
        let names: Vec<_> = res.estimators.iter().map(|s| s.estimator).collect();
        assert_eq!(names, vec![Method::Tc, Method::Naive]);
        assert_eq!(res.draws.len(), 4);
        assert!(run_monte_carlo(&tiny("appendix-no-direct", 4), &[]).is_err());
    }

    #[test]
    fn singular_omega_failures_are_counted() {
        let mut s = tiny("appendix-direct", 3);
        s.omega = DMatrix::zeros(3, 3);
        let res = run_monte_carlo(&s, &[Method::Naive, Method::Tc]).unwrap();
        assert_eq!(res.summary(Method::Naive).unwrap().failures, 0);
        let tc = res.summary(Method::Tc).unwrap();
        assert_eq!((tc.successes, tc.failures), (0, 3));
        assert!(tc.first_failure.is_some());
        assert!(tc.mean.is_none());
    }

    #[test]
    fn independent_of_thread_count() {
        let s = tiny("appendix-direct", 6);
        let methods = [Method::Naive, Method::Jackknife, Method::Tc, Method::Limlk, Method::Kclass];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_monte_carlo(&s, &methods)).unwrap();
        let b = four.install(|| run_monte_carlo(&s, &methods)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn welford_merge_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.01 + 1e3).collect();
        let mut a = Moments::new(1);
        let mut b = Moments::new(1);
        for (i, x) in xs.iter().enumerate() {
            if i < 300 { a.push(&[*x], false) } else { b.push(&[*x], i % 2 == 0) }
        }
        a.merge(&b);
        let vs: Vec<_> = xs.iter().map(|x| DVector::from_row_slice(&[*x])).collect();
        let (m, sd) = column_moments(&vs).unwrap();
        assert!((a.mean[0] - m[0]).abs() < 1e-9);
        assert!((a.standard_error().unwrap()[0] - sd.unwrap()[0] / 1000f64.sqrt()).abs() < 1e-9);
        assert_eq!(a.flagged, 350);
    }

    #[test]
    fn lambda_study_is_thread_independent() {
        let s = tiny("appendix-figure-setup", 600);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| run_lambda_study(&s, Method::Jackknife)).unwrap();
        let b = run_lambda_study(&s, Method::Jackknife).unwrap();
        assert_eq!(a, b);
        assert!(run_lambda_study(&s, Method::Limlk).is_err());
    }

    #[test]
    fn moments_match_hand_computation() {
        let xs = vec![DVector::from_row_slice(&[1.0]), DVector::from_row_slice(&[3.0])];
        let (m, sd) = column_moments(&xs).unwrap();
        assert_eq!(m[0], 2.0);
        assert!((sd.unwrap()[0] - 2.0_f64.sqrt()).abs() < 1e-15);
    }
}
