//! Deconvolution of the s-signal: find `s` with `H s ~ y` where `H` is the
//! valid-part convolution by the estimated cooperator-to-generator channel
//! and `y` the cooperator's observation of the non-adjacent channel.
//!
//! Four solvers are provided: exact least squares ([`solve_ml`], with the
//! minimum-norm variant [`solve_ml_min_norm`]),
//! Tikhonov regularization with a fixed weight ([`solve_map`]), the weight
//! picked by repeated hold-out validation ([`solve_map_cv`]) and a Bayesian
//! model whose noise and prior variances are estimated jointly with the
//! signal by expectation maximization ([`solve_em`]).

use std::fmt;
use std::str::FromStr;

mod em;
mod map;
mod ml;
mod operator;

pub use em::{em_objective, log_evidence, solve_em, EmState, PosteriorCovariance};
pub use map::{cv_partitions, solve_map, solve_map_cv, CvConfig, MapConfig};
pub use ml::{solve_ml, solve_ml_min_norm};
pub use operator::{ConvolutionOperator, Penalty};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DeconvSolution {
    pub s: Vec<f64>,
    /// `||H s - y||`.
    pub residual_norm: f64,
    pub effective_lambda: Option<f64>,
    pub em_trajectory: Option<Vec<EmState>>,
    /// Set when the system was numerically rank deficient (ML only).
    pub rank_deficient: bool,
    /// Mean validation error per grid weight (MAP-CV only).
    pub cv_curve: Option<Vec<(f64, f64)>>,
}

impl DeconvSolution {
    pub(crate) fn new(s: Vec<f64>, residual_norm: f64) -> Self {
        Self {
            s,
            residual_norm,
            effective_lambda: None,
            em_trajectory: None,
            rank_deficient: false,
            cv_curve: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeconvMethod {
    /// Basic exact solution.
    Ml,
    MlMinNorm,
    Map(f64),
    MapCv,
    Em,
}

impl fmt::Display for DeconvMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeconvMethod::Ml => write!(f, "ml"),
            DeconvMethod::MlMinNorm => write!(f, "ml-min-norm"),
            DeconvMethod::Map(l) => write!(f, "map:{l}"),
            DeconvMethod::MapCv => write!(f, "map-cv"),
            DeconvMethod::Em => write!(f, "em"),
        }
    }
}

impl FromStr for DeconvMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "ml" => Ok(DeconvMethod::Ml),
            "ml-min-norm" => Ok(DeconvMethod::MlMinNorm),
            "map-cv" | "mapcv" | "map_cv" => Ok(DeconvMethod::MapCv),
            "em" => Ok(DeconvMethod::Em),
            _ => {
                let lambda = s
                    .strip_prefix("map:")
                    .or_else(|| s.strip_prefix("map="))
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|l| *l >= 0.0)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))?;
                Ok(DeconvMethod::Map(lambda))
            }
        }
    }
}

/// Settings shared by the solvers when dispatched through [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub penalty: Penalty,
    pub cv: CvConfig,
    pub em_iterations: usize,
    pub em_epsilon0: f64,
    pub em_gamma0: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            penalty: Penalty::Identity,
            cv: CvConfig::default(),
            em_iterations: 30,
            em_epsilon0: 1.0,
            em_gamma0: 1.0,
        }
    }
}

pub fn solve(
    method: DeconvMethod,
    op: &ConvolutionOperator,
    y: &[f64],
    settings: &SolverSettings,
    seed: u64,
) -> Result<DeconvSolution> {
    match method {
        DeconvMethod::Ml => solve_ml(op, y),
        DeconvMethod::MlMinNorm => solve_ml_min_norm(op, y),
        DeconvMethod::Map(lambda) => {
            solve_map(op, y, &MapConfig { lambda, penalty: settings.penalty })
        }
        DeconvMethod::MapCv => {
            let cv = CvConfig { penalty: settings.penalty, ..settings.cv.clone() };
            solve_map_cv(op, y, &cv, seed)
        }
        DeconvMethod::Em => solve_em(
            op,
            y,
            settings.penalty,
            settings.em_iterations,
            settings.em_epsilon0,
            settings.em_gamma0,
        ),
    }
}

pub(crate) fn check_target(op: &ConvolutionOperator, y: &[f64]) -> Result<()> {
    if y.len() != op.target_len() {
        return Err(Error::DimensionMismatch { expected: op.target_len(), got: y.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [DeconvMethod::Ml, DeconvMethod::MlMinNorm, DeconvMethod::Map(0.01), DeconvMethod::MapCv, DeconvMethod::Em] {
            assert_eq!(m.to_string().parse::<DeconvMethod>().unwrap(), m);
        }
        assert!("map:-1".parse::<DeconvMethod>().is_err());
        assert!("ridge".parse::<DeconvMethod>().is_err());
    }
}
