use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::chart::ChartSpec;
use crate::dataset::{DataSet, Statistic};
use crate::error::{GeomError, Result};
use crate::numdiff::{fd_gradient, fd_hessian, fd_hessian_from_gradient, DiffConfig};
use crate::tensor::Connection;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceKind {
    KullbackLeibler,
    Other,
}

/// One entry of a model's statistic schema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatisticSpec {
    pub statistic: Statistic,
    pub parameter_dependent: bool,
    /// θ-independent additive term (the entropy); never perturbed by probes.
    pub offset: bool,
}

impl StatisticSpec {
    pub fn plain(statistic: Statistic) -> Self {
        Self {
            statistic,
            parameter_dependent: false,
            offset: false,
        }
    }

    pub fn offset(statistic: Statistic) -> Self {
        Self {
            statistic,
            parameter_dependent: false,
            offset: true,
        }
    }

    pub fn dependent(statistic: Statistic) -> Self {
        Self {
            statistic,
            parameter_dependent: true,
            offset: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeFamily {
    Primary,
    Secondary,
}

/// A curve ε ↦ X(ε) in data space through a fibre member at ε = 0.
pub struct ProbeCurve {
    pub label: String,
    /// Natural size of ε; finite-difference steps are a fraction of it.
    pub scale: f64,
    build: Box<dyn Fn(f64) -> Result<DataSet> + Send + Sync>,
}

impl ProbeCurve {
    pub fn new(
        label: impl Into<String>,
        scale: f64,
        build: impl Fn(f64) -> Result<DataSet> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            scale,
            build: Box::new(build),
        }
    }

    pub fn at(&self, eps: f64) -> Result<DataSet> {
        (self.build)(eps)
    }
}

impl std::fmt::Debug for ProbeCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProbeCurve")
            .field("label", &self.label)
            .field("scale", &self.scale)
            .finish()
    }
}

/// Closed forms a model can supply for testing. Every method is optional.
pub trait ClosedForms: Send + Sync {
    fn metric(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    fn connection(&self, _theta: &[f64]) -> Option<Connection> {
        None
    }
    fn affine_coordinates(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn massieu(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
}

/// A data set model: chart, divergence, fibres and probes.
pub trait ModelDefinition: Send + Sync {
    fn name(&self) -> &str;
    fn chart(&self) -> &ChartSpec;
    fn statistics(&self) -> Vec<StatisticSpec>;
    fn kind(&self) -> DivergenceKind;

    /// D(x‖m_θ) for θ already known to be inside the chart.
    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64>;

    fn analytic_gradient(&self, _x: &DataSet, _theta: &[f64]) -> Option<Result<DVector<f64>>> {
        None
    }

    fn analytic_hessian(&self, _x: &DataSet, _theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        None
    }

    /// Up to `k` distinct data sets in the fibre of m_θ.
    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>>;

    /// Off-fibre probe curves. Each curve starts on the fibre of θ and the
    /// family's gradient derivatives must form an invertible matrix.
    fn probes(&self, theta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        moment_probes(self, theta, family)
    }

    fn closed_form_fit(&self, _x: &DataSet) -> Result<Vec<f64>> {
        Err(GeomError::Unsupported(format!("{} has no closed-form fit", self.name())))
    }

    fn oracle(&self) -> Option<&dyn ClosedForms> {
        None
    }

    /// Model-specific Hessian terms reported as Condition-4 evidence.
    fn varying_terms(&self, _x: &DataSet, _theta: &[f64]) -> Result<Vec<(String, f64)>> {
        Ok(Vec::new())
    }

    fn default_grid(&self) -> Vec<Vec<f64>> {
        self.chart().default_grid(5)
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.chart().sample(rng)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Analytic derivatives when the model has them, finite differences otherwise.
    #[default]
    Auto,
    FiniteDifference,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Derivatives {
    pub mode: DerivativeMode,
    pub diff: DiffConfig,
}

impl Derivatives {
    pub fn finite_difference() -> Self {
        Self {
            mode: DerivativeMode::FiniteDifference,
            diff: DiffConfig::default(),
        }
    }
}

pub fn evaluate_divergence(model: &(impl ModelDefinition + ?Sized), x: &DataSet, theta: &[f64]) -> Result<f64> {
    model.chart().check(theta)?;
    let d = model.divergence(x, theta)?;
    if !d.is_finite() {
        return Err(GeomError::numerical(format!(
            "{} divergence is not finite at {theta:?}",
            model.name()
        )));
    }
    Ok(d)
}

pub fn divergence_gradient(
    model: &(impl ModelDefinition + ?Sized),
    x: &DataSet,
    theta: &[f64],
    how: &Derivatives,
) -> Result<DVector<f64>> {
    model.chart().check(theta)?;
    if how.mode == DerivativeMode::Auto {
        if let Some(g) = model.analytic_gradient(x, theta) {
            return g;
        }
    }
    fd_gradient(|p| evaluate_divergence(model, x, p), theta, model.chart(), &how.diff)
}

/// Plain (non-covariant) second derivatives ∂_i∂_j D(x‖m_θ).
pub fn divergence_hessian(
    model: &(impl ModelDefinition + ?Sized),
    x: &DataSet,
    theta: &[f64],
    how: &Derivatives,
) -> Result<DMatrix<f64>> {
    model.chart().check(theta)?;
    if how.mode == DerivativeMode::Auto {
        if let Some(h) = model.analytic_hessian(x, theta) {
            return h;
        }
        if model.analytic_gradient(x, theta).is_some() {
            return fd_hessian_from_gradient(
                |p| divergence_gradient(model, x, p, how),
                theta,
                model.chart(),
                &how.diff,
            );
        }
    }
    fd_hessian(|p| evaluate_divergence(model, x, p), theta, model.chart(), &how.diff)
}

/// Generic probes: moment-specified copies of a fibre member with the
/// declared statistics perturbed. The primary family moves one statistic per
/// curve; the secondary family moves pairs.
pub fn moment_probes<M: ModelDefinition + ?Sized>(
    model: &M,
    theta: &[f64],
    family: ProbeFamily,
) -> Result<Vec<ProbeCurve>> {
    let member = model
        .fibre(theta, 1)?
        .into_iter()
        .next()
        .ok_or_else(|| GeomError::FibreUnavailable(format!("{} returned an empty fibre", model.name())))?;
    let mut base = Vec::new();
    let mut movable = Vec::new();
    for spec in model.statistics() {
        if spec.parameter_dependent {
            continue;
        }
        let v = member.get(spec.statistic)?;
        if !spec.offset {
            movable.push(base.len());
        }
        base.push((spec.statistic, v));
    }
    let m = movable.len();
    let mut curves = Vec::with_capacity(m);
    for (c, &idx) in movable.iter().enumerate() {
        let partner = movable[(c + 1) % m];
        let mut weights = vec![0.0; base.len()];
        weights[idx] = 1.0;
        if family == ProbeFamily::Secondary && m > 1 {
            weights[partner] -= 0.5;
        }
        let scales: Vec<f64> = base.iter().map(|(_, v)| v.abs().max(1.0)).collect();
        let base = base.clone();
        let label = format!("{} moments #{c}", model.name());
        curves.push(ProbeCurve::new(label, 1.0, move |eps| {
            let values: Vec<(Statistic, f64)> = base
                .iter()
                .enumerate()
                .map(|(i, &(s, v))| (s, v + eps * weights[i] * scales[i]))
                .collect();
            Ok(DataSet::moments(&values))
        }));
    }
    Ok(curves)
}
