use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Condition4Evidence;

pub type Result<T> = std::result::Result<T, GeomError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoConvergenceReason {
    MaxIterations,
    LineSearch,
    SaddleOrMax,
}

impl std::fmt::Display for NoConvergenceReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::MaxIterations => "iteration limit reached",
            Self::LineSearch => "line search could not decrease the divergence",
            Self::SaddleOrMax => "stationary point is not a local minimum",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Error)]
pub enum GeomError {
    #[error("point {coords:?} is outside chart `{chart}`")]
    Domain { chart: String, coords: Vec<f64> },

    #[error("data set is outside the data space: {0}")]
    DataDomain(String),

    #[error("{provider} data set cannot answer {statistic}")]
    MissingStatistic {
        statistic: String,
        provider: &'static str,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no convergence after {iterations} iterations ({reason}), gradient norm {gradient_norm:.3e}")]
    NoConvergence {
        iterations: usize,
        reason: NoConvergenceReason,
        gradient_norm: f64,
    },

    #[error(
        "condition 4 violated at {:?}: fibre Hessians deviate by {:.3e} (tolerance {:.1e})",
        .0.theta, .0.deviation, .0.tolerance
    )]
    Condition4Violated(Box<Condition4Evidence>),

    #[error("probe families disagree by {deviation:.3e} (tolerance {tolerance:.1e})")]
    HessianStructureViolated { deviation: f64, tolerance: f64 },

    #[error("probe gradient matrix is singular (condition number {condition:.3e})")]
    ProbeSingular { condition: f64 },

    #[error("metric is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    MetricNotPD { min_eigenvalue: f64 },

    #[error("connection is not flat: path residual {residual:.3e} (tolerance {tolerance:.1e})")]
    NotFlat { residual: f64, tolerance: f64 },

    #[error("Mayer-Lie system is not integrable: path residual {residual:.3e} (tolerance {tolerance:.1e})")]
    NotIntegrable { residual: f64, tolerance: f64 },

    #[error("no fibre available: {0}")]
    FibreUnavailable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl GeomError {
    /// True for errors caused by the caller's inputs rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Self::Domain { .. }
                | Self::DataDomain(_)
                | Self::MissingStatistic { .. }
                | Self::FibreUnavailable(_)
                | Self::Unsupported(_)
                | Self::Config(_)
        )
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Self::NumericalFailure(msg.into())
    }
}
