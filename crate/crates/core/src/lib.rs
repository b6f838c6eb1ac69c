//! Geometry of data set models.
//!
//! A data set model is a data space, a parametrised model manifold, a model
//! map and a divergence. From the divergence alone this crate evaluates the
//! generalised Fisher metric, the affine connection, curvature, Codazzi
//! residuals, affine coordinates and Massieu potentials, and classifies a
//! model as an exponential family or not.
//!
//! Data sets are expectation providers ([`DataSet`]); a model reads its first
//! argument only through the statistics it declares.

pub mod chart;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod model;
pub mod models;
pub mod numdiff;
pub mod reparam;
pub mod special;
pub mod structure;
pub mod tensor;
pub mod tolerance;
pub mod transport;

pub use chart::{ChartSpec, ParameterPoint};
pub use dataset::{DataSet, Distribution, Statistic, StatisticQuery};
pub use error::{GeomError, Result};
pub use model::{
    divergence_gradient, divergence_hessian, evaluate_divergence, DerivativeMode, Derivatives,
    DivergenceKind, ModelDefinition,
};
pub use tensor::{Connection, CurvatureTensor};
pub use tolerance::Tolerances;
