//! Built-in catalogue of data set models.

mod gaussian;
mod gce;
mod gumbel;
mod regression;
mod vmf;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use gaussian::{GaussianKl, GaussianSumSq};
pub use gce::{gce_covariant_field, gce_geodesic, GrandCanonical};
pub use gumbel::Gumbel;
pub use regression::{RegressionDLambda, RegressionLs};
pub use vmf::{VmfCylinder, VmfSphere};

use crate::error::{GeomError, Result};
use crate::model::ModelDefinition;

pub const MODEL_NAMES: [&str; 8] = [
    "gaussian-kl",
    "gaussian-sumsq",
    "regression-ls",
    "regression-dlambda",
    "gce",
    "vmf-sphere",
    "vmf-cylinder",
    "gumbel",
];

/// Constructor arguments shared by the catalogue. Each model reads only its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// GCE energy levels.
    pub levels: Vec<f64>,
    /// von Mises–Fisher concentration.
    pub kappa: f64,
    /// D_λ weight.
    pub lambda: f64,
    pub mu0: f64,
    pub sigma0: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            levels: vec![1.0, 2.0, 3.0],
            kappa: 2.0,
            lambda: 1.0,
            mu0: 1.0,
            sigma0: 1.0,
        }
    }
}

#[derive(Clone)]
pub struct CatalogueEntry {
    pub model: Arc<dyn ModelDefinition>,
    /// Label `classify` should produce on the default grid.
    pub expected_label: &'static str,
    pub expected_condition4_fail: bool,
}

impl std::fmt::Debug for CatalogueEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatalogueEntry")
            .field("model", &self.model.name())
            .field("expected_label", &self.expected_label)
            .finish()
    }
}

fn entry(model: impl ModelDefinition + 'static, expected_label: &'static str) -> CatalogueEntry {
    CatalogueEntry {
        model: Arc::new(model),
        expected_label,
        expected_condition4_fail: expected_label == "fail-cond4",
    }
}

pub fn by_name(name: &str, params: &ModelParams) -> Result<CatalogueEntry> {
    Ok(match name {
        "gaussian-kl" => entry(GaussianKl::default(), "yes"),
        "gaussian-sumsq" => entry(GaussianSumSq::new(params.mu0, params.sigma0)?, "n/a-flat"),
        "regression-ls" => entry(RegressionLs::default(), "fail-cond4"),
        "regression-dlambda" => entry(RegressionDLambda::new(params.lambda)?, "n/a-flat"),
        "gce" => entry(GrandCanonical::new(&params.levels)?, "yes"),
        "vmf-sphere" => entry(VmfSphere::new(params.kappa)?, "no-curved"),
        "vmf-cylinder" => entry(VmfCylinder::new(params.kappa)?, "yes"),
        "gumbel" => entry(Gumbel::default(), "fail-cond4"),
        _ => {
            return Err(GeomError::Config(format!(
                "unknown model `{name}` (known: {})",
                MODEL_NAMES.join(", ")
            )))
        }
    })
}

/// Every model, in catalogue order.
pub fn catalogue(params: &ModelParams) -> Result<Vec<CatalogueEntry>> {
    MODEL_NAMES.iter().map(|n| by_name(n, params)).collect()
}
