//! Estimators of the covariance of true effects from experiment aggregates.

use nalgebra::{DMatrix, DVector};

use crate::effects::{theta2, CovEstimate, NoiseModel, Provenance, ProxyWeights};
use crate::error::{Error, Result};
use crate::estimators::aggregate::{panel_units_per_experiment, ExperimentAggregate};
use crate::linalg::population_covariance;

fn require_experiments(aggs: &[ExperimentAggregate]) -> Result<usize> {
    if aggs.len() < 2 {
        return Err(Error::Dimension(format!(
            "at least two experiments are required, got K = {}",
            aggs.len()
        )));
    }
    panel_units_per_experiment(aggs)
}

/// `K×G` matrix whose rows are the estimated effects `τ̂(t)`.
pub fn tau_hat_matrix(aggs: &[ExperimentAggregate]) -> DMatrix<f64> {
    let g = aggs.first().map_or(0, |a| a.num_metrics());
    let mut out = DMatrix::zeros(aggs.len(), g);
    for (t, agg) in aggs.iter().enumerate() {
        out.set_row(t, &agg.tau_hat().transpose());
    }
    out
}

/// Sample covariance (divisor `K`) of the estimated effects, `Σ̂_K`.
pub fn naive_sigma(aggs: &[ExperimentAggregate]) -> Result<CovEstimate> {
    require_experiments(aggs)?;
    CovEstimate::new(population_covariance(&tau_hat_matrix(aggs)), Provenance::Naive)
}

/// `E Σ̂_K = Λ_K + (4/n)Ω`.
pub fn naive_expectation(truth: &CovEstimate, noise: &NoiseModel, n: usize) -> Result<CovEstimate> {
    check_noise_dims(truth, noise)?;
    if n < 2 {
        return Err(Error::Dimension(format!("n must be at least 2, got {n}")));
    }
    let shift = 4.0 / n as f64;
    CovEstimate::new(truth.matrix() + noise.omega() * shift, Provenance::Naive)
}

/// Jackknifed covariance `Λ̂^JK`, evaluated in closed form from aggregates.
///
/// With `τ̂_{-i} = (n τ̂ − D̃_i)/(n − 1)` the per-experiment leave-one-out
/// second moment collapses to
/// `Λ̂₂(t) = n/(n−1) τ̂ τ̂ᵀ − Σ_i D̃_i D̃_iᵀ / (n(n−1))`,
/// so no unit-level pass is needed.
pub fn jackknife_lambda(aggs: &[ExperimentAggregate]) -> Result<CovEstimate> {
    let n = require_experiments(aggs)?;
    if n < 2 {
        return Err(Error::Dimension(format!("jackknife needs n ≥ 2 units per experiment, got {n}")));
    }
    let nf = n as f64;
    let g = aggs[0].num_metrics();
    let k = aggs.len() as f64;
    let mut second = DMatrix::zeros(g, g);
    let mut mean = DVector::zeros(g);
    for agg in aggs {
        let tau = agg.tau_hat();
        second += &tau * tau.transpose() * (nf / (nf - 1.0)) - agg.tilde_cross() / (nf * (nf - 1.0));
        mean += &tau;
    }
    second /= k;
    mean /= k;
    CovEstimate::new(second - &mean * mean.transpose(), Provenance::Jackknife)
}

/// Total-covariance estimate `Σ̂_K − (4/n)Ω`.
pub fn tc_lambda(sigma: &CovEstimate, noise: &NoiseModel, n: usize) -> Result<CovEstimate> {
    require_naive(sigma, "total-covariance")?;
    check_noise_dims(sigma, noise)?;
    if n < 2 {
        return Err(Error::Dimension(format!("n must be at least 2, got {n}")));
    }
    CovEstimate::new(sigma.matrix() - noise.omega() * (4.0 / n as f64), Provenance::Tc)
}

/// LIML with known noise covariance: `θ_{2,Ω}` of the naive covariance.
///
/// Whitening by `Ω^{-1/2}` turns the `(4/n)Ω` noise into a multiple of the
/// identity, which moves eigenvalues but not eigenvectors, so `n` plays no
/// role in the weights.
pub fn limlk_weights(sigma: &CovEstimate, noise: &NoiseModel, n: usize) -> Result<ProxyWeights> {
    require_naive(sigma, "LIMLK")?;
    if n < 2 {
        return Err(Error::Dimension(format!("n must be at least 2, got {n}")));
    }
    theta2(sigma, noise)
}

/// Pooled within-cell covariance of `D` (divisor `N`): an estimate of `Ω`.
pub fn pooled_cell_omega(aggs: &[ExperimentAggregate]) -> Result<NoiseModel> {
    let n = panel_units_per_experiment(aggs)?;
    let g = aggs[0].num_metrics();
    let total = (n * aggs.len()) as f64;
    let mut scatter = DMatrix::zeros(g, g);
    for agg in aggs {
        for cell in &agg.arms {
            scatter += cell.centered_scatter();
        }
    }
    NoiseModel::new(crate::linalg::symmetrize(&(scatter / total)))
}

fn require_naive(sigma: &CovEstimate, what: &str) -> Result<()> {
    if sigma.provenance() != Provenance::Naive {
        return Err(Error::InvalidInput(format!(
            "{what} estimator expects the naive covariance, got a {} estimate",
            sigma.provenance()
        )));
    }
    Ok(())
}

fn check_noise_dims(cov: &CovEstimate, noise: &NoiseModel) -> Result<()> {
    if cov.num_metrics() != noise.dim() {
        return Err(Error::Dimension(format!(
            "covariance has G = {} but noise matrix is {}×{}",
            cov.num_metrics(),
            noise.dim(),
            noise.dim()
        )));
    }
    Ok(())
}
