//! Reference lines for effect scatterplots, raw and after `Ω^{-1/2}` whitening.
//!
//! Targets use `Λ`; probability limits of the naive plug-in use
//! `Λ + (4/n)Ω` (raw) or `Λ̃ + (4/n)I` (whitened, `Λ̃ = Ω^{-1/2}ΛΩ^{-1/2}`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::effects::{theta1, theta2, CovEstimate, NoiseModel, Provenance};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSet {
    pub ols_target: DVector<f64>,
    pub ols_plim: DVector<f64>,
    pub tls_target: DVector<f64>,
    pub tls_plim: DVector<f64>,
}

impl LineSet {
    fn compute(lambda: &DMatrix<f64>, noise: &DMatrix<f64>, psi: &NoiseModel, n: usize) -> Result<Self> {
        let target = CovEstimate::new(lambda.clone(), Provenance::Exact)?;
        let plim = CovEstimate::new(lambda + noise * (4.0 / n as f64), Provenance::Naive)?;
        Ok(Self {
            ols_target: theta1(&target)?.weights,
            ols_plim: theta1(&plim)?.weights,
            tls_target: theta2(&target, psi)?.weights,
            tls_plim: theta2(&plim, psi)?.weights,
        })
    }

    pub fn ols_gap(&self) -> f64 {
        (&self.ols_plim - &self.ols_target).norm()
    }

    pub fn tls_gap(&self) -> f64 {
        (&self.tls_plim - &self.tls_target).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLines {
    pub units_per_experiment: usize,
    pub raw: LineSet,
    pub whitened: LineSet,
}

/// Exact OLS/TLS target and plim lines for true covariance `lambda`.
pub fn reference_lines(lambda: &DMatrix<f64>, noise: &NoiseModel, n: usize) -> Result<ReferenceLines> {
    let g = noise.dim();
    let w = noise.inverse_sqrt();
    let lambda_w = &w * lambda * &w;
    let identity = NoiseModel::identity(g);
    Ok(ReferenceLines {
        units_per_experiment: n,
        raw: LineSet::compute(lambda, noise.omega(), noise, n)?,
        whitened: LineSet::compute(&lambda_w, &DMatrix::identity(g, g), &identity, n)?,
    })
}

/// Applies `Ω^{-1/2}` to each row of `points`.
pub fn whiten_rows(points: &DMatrix<f64>, noise: &NoiseModel) -> DMatrix<f64> {
    points * noise.inverse_sqrt()
}
