//! One entry point per estimation method, shared by the CLI and the Monte
//! Carlo harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::effects::{theta1, CovEstimate, NoiseModel, ProxyWeights};
use crate::error::{Error, Result};
use crate::estimators::aggregate::{panel_units_per_experiment, ExperimentAggregate};
use crate::estimators::covariance::{jackknife_lambda, limlk_weights, naive_sigma, tc_lambda};
use crate::estimators::kclass::{kclass_theta1, kclass_theta1_from_aggregates, within_experiment_omega};
use crate::estimators::units::UnitTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Jackknife,
    Limlk,
    Tc,
    Kclass,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Naive, Method::Jackknife, Method::Limlk, Method::Tc, Method::Kclass];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Jackknife => "jackknife",
            Method::Limlk => "limlk",
            Method::Tc => "tc",
            Method::Kclass => "kclass",
        }
    }

    /// Needs a supplied `Ω`.
    pub fn needs_noise(self) -> bool {
        matches!(self, Method::Limlk | Method::Tc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}' (expected naive, jackknife, limlk, tc or kclass)")))
    }
}

/// Covariance estimate behind the weights (when the method has one) and the
/// weights themselves. For `limlk` the covariance is the naive `Σ̂` it
/// whitens; for `kclass` it is `Σ̂ − (4/n)·W/N`.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub lambda: CovEstimate,
    pub weights: ProxyWeights,
}

/// Runs `method` on a panel. `units` enables the unit-level k-class route;
/// `noise` is required by `limlk` and `tc`.
pub fn run_method(
    method: Method,
    aggs: &[ExperimentAggregate],
    units: Option<&UnitTable>,
    noise: Option<&NoiseModel>,
) -> Result<MethodOutput> {
    let require_noise = || {
        noise.ok_or_else(|| Error::InvalidInput(format!("method '{method}' requires a noise covariance Ω")))
    };
    match method {
        Method::Naive => {
            let lambda = naive_sigma(aggs)?;
            Ok(MethodOutput { weights: theta1(&lambda)?, lambda })
        }
        Method::Jackknife => {
            let lambda = jackknife_lambda(aggs)?;
            Ok(MethodOutput { weights: theta1(&lambda)?, lambda })
        }
        Method::Tc => {
            let n = panel_units_per_experiment(aggs)?;
            let lambda = tc_lambda(&naive_sigma(aggs)?, require_noise()?, n)?;
            Ok(MethodOutput { weights: theta1(&lambda)?, lambda })
        }
        Method::Limlk => {
            let n = panel_units_per_experiment(aggs)?;
            let lambda = naive_sigma(aggs)?;
            Ok(MethodOutput { weights: limlk_weights(&lambda, require_noise()?, n)?, lambda })
        }
        Method::Kclass => {
            let n = panel_units_per_experiment(aggs)?;
            let lambda = tc_lambda(&naive_sigma(aggs)?, &within_experiment_omega(aggs)?, n)?;
            let weights = match units {
                Some(units) => kclass_theta1(units)?,
                None => kclass_theta1_from_aggregates(aggs)?,
            };
            Ok(MethodOutput { lambda, weights })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ols".parse::<Method>().is_err());
    }

    #[test]
    fn noise_is_required() {
        let mut t = UnitTable::new(2);
        for e in 0..3 {
            t.add_experiment(format!("e{e}"));
            for (a, v) in [(0u8, [0.0, 1.0]), (0, [1.0, 0.5]), (1, [e as f64, 2.0]), (1, [1.0, -(e as f64)])] {
                t.push(e, a, &v).unwrap();
            }
        }
        let aggs = t.aggregate().unwrap();
        assert!(matches!(run_method(Method::Tc, &aggs, None, None), Err(Error::InvalidInput(_))));
        assert!(run_method(Method::Naive, &aggs, None, None).is_ok());
    }
}
