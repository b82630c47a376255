//! Domain types for treatment-effect covariances and the two proxy estimands.
//!
//! Metric order is always `[Y, S_1, …, S_{G-1}]`: the first coordinate is the
//! primary metric, the rest are the secondary metrics the proxy is built from.
//!
//! All covariances use the population divisor `1/K`, never `1/(K-1)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_sqrt_spd, population_covariance, sorted_eigen, sorted_eigenvalues, symmetrize};

/// Threshold on `|λ_min| / |λ_max|` of `Λ_SS` below which `θ₁` is refused.
pub const SS_CONDITION_FLOOR: f64 = 1e-10;
/// Minimum eigenvalue gap, relative to the spectral radius, for `θ₂` to be identified.
pub const EIGEN_GAP_FLOOR: f64 = 1e-10;
/// Minimum `|γ_Y| / ‖γ‖` for `θ₂`.
pub const GAMMA_Y_FLOOR: f64 = 1e-10;
/// Bound on `‖(Λ − κΨ)γ‖ / ‖γ‖` relative to `‖Λ‖_F`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Relative eigenvalue tolerance used for the indefiniteness flag.
pub const INDEFINITE_TOLERANCE: f64 = 1e-12;

/// Shape of a balanced two-arm panel: `K` experiments, `G` metrics, `n` units
/// per experiment (`n/2` per arm).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelDims {
    pub num_experiments: usize,
    pub num_metrics: usize,
    pub units_per_experiment: usize,
}

impl PanelDims {
    pub fn new(num_experiments: usize, num_metrics: usize, units_per_experiment: usize) -> Result<Self> {
        if num_experiments < 1 {
            return Err(Error::Dimension("at least one experiment is required".into()));
        }
        if num_metrics < 2 {
            return Err(Error::Dimension(format!(
                "need a primary metric and at least one secondary metric, got G = {num_metrics}"
            )));
        }
        if units_per_experiment < 4 || !units_per_experiment.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "units per experiment must be even and at least 4, got n = {units_per_experiment}"
            )));
        }
        Ok(Self { num_experiments, num_metrics, units_per_experiment })
    }

    pub fn arm_size(&self) -> usize {
        self.units_per_experiment / 2
    }

    pub fn total_units(&self) -> usize {
        self.num_experiments * self.units_per_experiment
    }

    /// Whether `Λ_SS` can possibly be invertible (`K ≥ G − 1`).
    pub fn supports_invertible_ss(&self) -> bool {
        self.num_experiments + 1 >= self.num_metrics
    }
}

/// `K×G` matrix of true per-experiment effects; row `t` is `[τ_Y(t), τ_S(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueEffects {
    effects: DMatrix<f64>,
}

impl TrueEffects {
    pub fn new(effects: DMatrix<f64>) -> Result<Self> {
        if effects.nrows() < 1 || effects.ncols() < 2 {
            return Err(Error::Dimension(format!(
                "true effects must be K×G with K ≥ 1 and G ≥ 2, got {}×{}",
                effects.nrows(),
                effects.ncols()
            )));
        }
        if effects.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("true effects contain non-finite values".into()));
        }
        Ok(Self { effects })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.effects
    }

    pub fn num_experiments(&self) -> usize {
        self.effects.nrows()
    }

    pub fn num_metrics(&self) -> usize {
        self.effects.ncols()
    }
}

/// Which estimator produced a [`CovEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Naive,
    Jackknife,
    Tc,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Provenance::Exact => "exact",
            Provenance::Naive => "naive",
            Provenance::Jackknife => "jackknife",
            Provenance::Tc => "tc",
        };
        f.write_str(name)
    }
}

/// A `G×G` symmetric covariance of treatment effects with `Y`/`S` blocks.
///
/// Jackknife and total-covariance estimates subtract noise and can come out
/// indefinite; that is recorded in [`CovEstimate::is_indefinite`], not rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    matrix: DMatrix<f64>,
    provenance: Provenance,
    indefinite: bool,
}

impl CovEstimate {
    pub fn new(matrix: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "covariance must be square with G ≥ 2, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance contains non-finite values".into()));
        }
        let matrix = symmetrize(&matrix);
        let eigenvalues = sorted_eigenvalues(&matrix);
        let scale = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let indefinite = eigenvalues[0] < -INDEFINITE_TOLERANCE * scale;
        Ok(Self { matrix, provenance, indefinite })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_indefinite(&self) -> bool {
        self.indefinite
    }

    pub fn num_metrics(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn lambda_yy(&self) -> f64 {
        self.matrix[(0, 0)]
    }

    pub fn lambda_sy(&self) -> DVector<f64> {
        let g = self.num_metrics();
        self.matrix.view((1, 0), (g - 1, 1)).column(0).into_owned()
    }

    pub fn lambda_ss(&self) -> DMatrix<f64> {
        let g = self.num_metrics();
        self.matrix.view((1, 1), (g - 1, g - 1)).into_owned()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> DVector<f64> {
        sorted_eigenvalues(&self.matrix)
    }
}

/// A symmetric positive-definite `G×G` matrix: the unit-level noise covariance
/// `Ω`, or any weight matrix `Ψ` handed to [`theta2`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    omega: DMatrix<f64>,
    condition_number: f64,
}

impl NoiseModel {
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        if !omega.is_square() || omega.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "noise covariance must be square, got {}×{}",
                omega.nrows(),
                omega.ncols()
            )));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("noise covariance contains non-finite values".into()));
        }
        let scale = omega.amax();
        let asym = (&omega - omega.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::InvalidInput(format!(
                "noise covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let omega = symmetrize(&omega);
        let eigenvalues = sorted_eigenvalues(&omega);
        let smallest = eigenvalues[0];
        if smallest <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "noise covariance has smallest eigenvalue {smallest:e}"
            )));
        }
        let condition_number = eigenvalues[eigenvalues.len() - 1] / smallest;
        Ok(Self { omega, condition_number })
    }

    pub fn identity(dim: usize) -> Self {
        Self { omega: DMatrix::identity(dim, dim), condition_number: 1.0 }
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    /// `ρΩ` for `ρ > 0`.
    pub fn scaled(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInput(format!("scale must be positive, got {rho}")));
        }
        Ok(Self { omega: &self.omega * rho, condition_number: self.condition_number })
    }

    /// `Ω^{-1/2}` (symmetric root).
    pub fn inverse_sqrt(&self) -> DMatrix<f64> {
        inverse_sqrt_spd(&self.omega).expect("validated positive definite")
    }
}

/// Which estimand produced a set of weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// `Λ_SS⁻¹ Λ_SY`, regression of `τ_Y` on `τ_S`.
    OlsTheta1,
    /// `−γ_S/γ_Y` from the smallest generalized eigenvector of `(Λ, Ψ)`.
    TlsTheta2,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::OlsTheta1 => "ols_theta1",
            Estimand::TlsTheta2 => "tls_theta2",
        })
    }
}

/// Weights on the secondary metrics, plus diagnostics for the TLS estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyWeights {
    pub weights: DVector<f64>,
    pub estimand: Estimand,
    /// Smallest generalized eigenvalue (TLS only). May be negative for
    /// indefinite inputs.
    pub kappa: Option<f64>,
    /// `‖(Λ − κΨ)γ‖₂ / ‖γ‖₂` (TLS only).
    pub residual_norm: Option<f64>,
    /// Y-coordinate of the unit-norm generalized eigenvector (TLS only).
    pub gamma_y: Option<f64>,
}

impl ProxyWeights {
    fn ols(weights: DVector<f64>) -> Self {
        Self { weights, estimand: Estimand::OlsTheta1, kappa: None, residual_norm: None, gamma_y: None }
    }
}

/// Exact covariance of the true effects across experiments (divisor `K`).
pub fn cov_of_effects(effects: &TrueEffects) -> Result<CovEstimate> {
    if effects.num_experiments() < 2 {
        return Err(Error::Dimension(format!(
            "covariance of effects needs K ≥ 2, got K = {}",
            effects.num_experiments()
        )));
    }
    CovEstimate::new(population_covariance(effects.matrix()), Provenance::Exact)
}

/// `θ₁ = Λ_SS⁻¹ Λ_SY`.
pub fn theta1(cov: &CovEstimate) -> Result<ProxyWeights> {
    let ss = cov.lambda_ss();
    let sy = cov.lambda_sy();
    let eigenvalues = sorted_eigenvalues(&ss);
    let (smallest, largest) = eigenvalues.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    });
    // Negated so that NaN lands in the error branch.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(smallest > SS_CONDITION_FLOOR * largest) {
        let offending = eigenvalues
            .iter()
            .copied()
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        return Err(Error::Conditioning { eigenvalue: offending, largest });
    }
    let weights = ss
        .lu()
        .solve(&sy)
        .ok_or(Error::Conditioning { eigenvalue: smallest, largest })?;
    Ok(ProxyWeights::ols(weights))
}

/// `θ_{2,Ψ}`: TLS on the `Ψ^{-1/2}`-whitened scatter of effects.
///
/// Whitens `Λ` with the symmetric root of `Ψ`, takes the eigenvector of the
/// smallest eigenvalue `κ`, maps it back with `Ψ^{-1/2}`, and normalizes the
/// Y-coordinate to one. A repeated smallest eigenvalue or a vanishing
/// Y-coordinate is an error rather than an arbitrary choice.
pub fn theta2(cov: &CovEstimate, psi: &NoiseModel) -> Result<ProxyWeights> {
    let g = cov.num_metrics();
    if psi.dim() != g {
        return Err(Error::Dimension(format!(
            "weight matrix is {}×{} but covariance has G = {g}",
            psi.dim(),
            psi.dim()
        )));
    }
    let lambda = cov.matrix();
    let root = psi.inverse_sqrt();
    let whitened = symmetrize(&(&root * lambda * &root));
    let (values, vectors) = sorted_eigen(&whitened);

    let radius = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let gap = values[1] - values[0];
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(gap >= EIGEN_GAP_FLOOR * radius) || radius == 0.0 {
        return Err(Error::AmbiguousEigenvalue { gap });
    }
    let kappa = values[0];

    let gamma = &root * vectors.column(0);
    let gamma = &gamma / gamma.norm();
    let gamma_y = gamma[0];
    if gamma_y.abs() < GAMMA_Y_FLOOR {
        return Err(Error::DegenerateDirection { gamma_y });
    }
    let normalized = &gamma / gamma_y;

    let residual = (lambda - psi.omega() * kappa) * &normalized;
    let residual_norm = residual.norm() / normalized.norm();
    let tolerance = RESIDUAL_TOLERANCE * lambda.norm();
    if residual_norm > tolerance {
        return Err(Error::Residual { residual: residual_norm, tolerance });
    }

    let weights = -normalized.rows(1, g - 1).into_owned();
    Ok(ProxyWeights {
        weights,
        estimand: Estimand::TlsTheta2,
        kappa: Some(kappa),
        residual_norm: Some(residual_norm),
        gamma_y: Some(gamma_y),
    })
}
