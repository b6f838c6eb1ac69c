//! Metric, connection, curvature and Codazzi residuals of a data set model.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chart::ChartSpec;
use crate::dataset::DataSet;
use crate::error::{GeomError, Result};
use crate::model::{divergence_gradient, divergence_hessian, Derivatives, ModelDefinition, ProbeFamily};
use crate::numdiff::{derivative_1d, fd_field_derivative, DiffConfig};
use crate::reparam::{ChartMap, Reparametrised};
use crate::tensor::{max_abs, ser_matrices, ser_matrix, Connection, CurvatureTensor};
use crate::tolerance::Tolerances;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Fibre members requested per metric evaluation.
    pub fibre_k: usize,
    pub derivatives: Derivatives,
    pub tolerances: Tolerances,
    /// RK4 steps per unit path for path integrals.
    pub ode_steps: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            fibre_k: 3,
            derivatives: Derivatives::default(),
            tolerances: Tolerances::default(),
            ode_steps: 200,
        }
    }
}

/// Why Condition 4 failed at a point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Condition4Evidence {
    pub theta: Vec<f64>,
    /// Max spread of a Hessian entry across members, relative to the largest entry.
    pub deviation: f64,
    pub tolerance: f64,
    /// Hessian entry with the largest spread.
    pub entry: [usize; 2],
    pub member_kinds: Vec<String>,
    /// That entry for each member.
    pub member_values: Vec<f64>,
    /// Model-specific Hessian terms per member.
    pub varying_terms: Vec<Vec<(String, f64)>>,
    /// max/min of the first varying term across members.
    pub evidence_ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricEvaluation {
    #[serde(serialize_with = "ser_matrix")]
    pub metric: DMatrix<f64>,
    /// Condition-4 diagnostic: relative spread of the member Hessians.
    pub deviation: f64,
    pub members: usize,
    #[serde(serialize_with = "ser_matrices")]
    pub member_hessians: Vec<DMatrix<f64>>,
}

fn relative_spread(hs: &[DMatrix<f64>]) -> (f64, [usize; 2]) {
    let n = hs[0].nrows();
    let scale = hs.iter().map(max_abs).fold(f64::MIN_POSITIVE, f64::max);
    let mut worst = (0.0, [0, 0]);
    for i in 0..n {
        for j in i..n {
            let (lo, hi) = hs
                .iter()
                .map(|h| h[(i, j)])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if hi - lo > worst.0 {
                worst = (hi - lo, [i, j]);
            }
        }
    }
    (worst.0 / scale, worst.1)
}

/// Fibre members at θ with their divergence Hessians. Members whose gradient
/// exceeds the fibre tolerance are rejected.
pub fn fibre_hessians(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    cfg: &GeometryConfig,
) -> Result<(Vec<DataSet>, Vec<DMatrix<f64>>)> {
    model.chart().check(theta)?;
    let members = model.fibre(theta, cfg.fibre_k)?;
    if members.is_empty() || members.len() < cfg.fibre_k.min(2) {
        return Err(GeomError::FibreUnavailable(format!(
            "{} supplied {} fibre members at {theta:?}",
            model.name(),
            members.len()
        )));
    }
    let how = &cfg.derivatives;
    let mut hs = Vec::with_capacity(members.len());
    for x in &members {
        let g = divergence_gradient(model, x, theta, how)?;
        let gmax = g.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if gmax > cfg.tolerances.fibre_grad {
            return Err(GeomError::FibreUnavailable(format!(
                "{} member ({}) has gradient {gmax:.3e} at {theta:?}",
                model.name(),
                x.provider_kind()
            )));
        }
        hs.push(divergence_hessian(model, x, theta, how)?);
    }
    Ok((members, hs))
}

/// g_ij(θ): the divergence Hessian averaged over fibre members, with the
/// Condition-4 spread as a diagnostic.
pub fn metric_at(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    cfg: &GeometryConfig,
) -> Result<MetricEvaluation> {
    let (members, hs) = fibre_hessians(model, theta, cfg)?;
    let (deviation, entry) = relative_spread(&hs);
    let tol = cfg.tolerances.cond4;
    if deviation > tol {
        let varying_terms = members
            .iter()
            .map(|x| model.varying_terms(x, theta))
            .collect::<Result<Vec<_>>>()?;
        let firsts: Vec<f64> = varying_terms.iter().filter_map(|t| t.first().map(|p| p.1)).collect();
        let evidence_ratio = if firsts.len() >= 2 {
            let lo = firsts.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = firsts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo > 0.0).then(|| hi / lo)
        } else {
            None
        };
        return Err(GeomError::Condition4Violated(Box::new(Condition4Evidence {
            theta: theta.to_vec(),
            deviation,
            tolerance: tol,
            entry,
            member_kinds: members.iter().map(|x| x.provider_kind().to_string()).collect(),
            member_values: hs.iter().map(|h| h[(entry[0], entry[1])]).collect(),
            varying_terms,
            evidence_ratio,
        })));
    }
    let k = hs.len() as f64;
    let metric = hs.iter().fold(DMatrix::zeros(theta.len(), theta.len()), |a, h| a + h) / k;
    check_positive_definite(&metric)?;
    Ok(MetricEvaluation {
        metric,
        deviation,
        members: hs.len(),
        member_hessians: hs,
    })
}

pub fn check_positive_definite(g: &DMatrix<f64>) -> Result<()> {
    let min = SymmetricEigen::new(g.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min > 0.0 && min.is_finite() {
        Ok(())
    } else {
        Err(GeomError::MetricNotPD { min_eigenvalue: min })
    }
}

/// Connection coefficients from one probe family, with the condition number
/// of the probe gradient matrix.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeConnection {
    pub connection: Connection,
    pub condition: f64,
}

/// ω^c_ab from the derivative along each probe curve of the divergence
/// gradient (A) and Hessian (B): B_ab = A ω_ab.
pub fn connection_from_probes(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    family: ProbeFamily,
    cfg: &GeometryConfig,
) -> Result<ProbeConnection> {
    model.chart().check(theta)?;
    let n = theta.len();
    let curves = model.probes(theta, family)?;
    if curves.len() < n {
        return Err(GeomError::ProbeSingular {
            condition: f64::INFINITY,
        });
    }
    let how = &cfg.derivatives;
    let mut a = DMatrix::zeros(curves.len(), n);
    let mut b = Vec::with_capacity(curves.len());
    for (d, curve) in curves.iter().enumerate() {
        let eval = |eps: f64| -> Result<Vec<f64>> {
            let x = curve.at(eps)?;
            let g = divergence_gradient(model, &x, theta, how)?;
            let h = divergence_hessian(model, &x, theta, how)?;
            let mut out = g.as_slice().to_vec();
            for i in 0..n {
                for j in 0..n {
                    out.push(h[(i, j)]);
                }
            }
            Ok(out)
        };
        let s = curve.scale;
        let dv = derivative_1d(eval, 0.0, 1e-3 * s, (-s, s), s, &how.diff)?;
        for c in 0..n {
            a[(d, c)] = dv[c];
        }
        b.push(DMatrix::from_row_slice(n, n, &dv[n..]));
    }
    connection_from_matrices(&a, &b, cfg.tolerances.probe_condition)
}

fn connection_from_matrices(a: &DMatrix<f64>, b: &[DMatrix<f64>], max_condition: f64) -> Result<ProbeConnection> {
    let n = a.ncols();
    let sv = a.clone().svd(false, false).singular_values;
    let (lo, hi) = sv
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(l, h), &v| (l.min(v), h.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(GeomError::ProbeSingular { condition });
    }
    let pinv = a
        .clone()
        .pseudo_inverse(0.0)
        .map_err(|e| GeomError::numerical(format!("probe pseudo-inverse: {e}")))?;
    let connection = Connection::from_fn(n, |c, i, j| {
        (0..b.len()).map(|d| pinv[(c, d)] * b[d][(i, j)]).sum()
    });
    Ok(ProbeConnection { connection, condition })
}

/// ω^c_ab = Σ_d (A⁻¹)^c_d [∂_a∂_b D(x^(d)‖m_θ) − g_ab] for finite probe data sets.
pub fn discrete_connection(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    probes: &[DataSet],
    metric: &DMatrix<f64>,
    cfg: &GeometryConfig,
) -> Result<ProbeConnection> {
    let n = theta.len();
    let how = &cfg.derivatives;
    let mut a = DMatrix::zeros(probes.len(), n);
    let mut b = Vec::with_capacity(probes.len());
    for (d, x) in probes.iter().enumerate() {
        let g = divergence_gradient(model, x, theta, how)?;
        a.set_row(d, &g.transpose());
        b.push(divergence_hessian(model, x, theta, how)? - metric);
    }
    connection_from_matrices(&a, &b, cfg.tolerances.probe_condition)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnectionEvaluation {
    pub connection: Connection,
    pub secondary: Connection,
    /// max |ω_primary − ω_secondary| / max(max |ω_primary|, 1).
    pub probe_consistency: f64,
    pub torsion: f64,
    pub condition: f64,
    pub metric: MetricEvaluation,
}

pub fn probe_consistency(primary: &Connection, secondary: &Connection) -> f64 {
    primary.max_abs_diff(secondary) / primary.max_abs().max(1.0)
}

/// Metric, then the connection from both probe families.
pub fn connection_at(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    cfg: &GeometryConfig,
) -> Result<ConnectionEvaluation> {
    let metric = metric_at(model, theta, cfg)?;
    let p = connection_from_probes(model, theta, ProbeFamily::Primary, cfg)?;
    let s = connection_from_probes(model, theta, ProbeFamily::Secondary, cfg)?;
    let consistency = probe_consistency(&p.connection, &s.connection);
    if consistency > cfg.tolerances.hess {
        return Err(GeomError::HessianStructureViolated {
            deviation: consistency,
            tolerance: cfg.tolerances.hess,
        });
    }
    Ok(ConnectionEvaluation {
        torsion: p.connection.torsion(),
        condition: p.condition.max(s.condition),
        connection: p.connection,
        secondary: s.connection,
        probe_consistency: consistency,
        metric,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AnalyticOracle,
    FibreEvaluated,
    Custom,
}

type FieldFn<'a, T> = Box<dyn Fn(&[f64]) -> Result<T> + Send + Sync + 'a>;

/// θ ↦ g_ij(θ).
pub struct MetricField<'a> {
    chart: ChartSpec,
    pub provenance: Provenance,
    eval: FieldFn<'a, DMatrix<f64>>,
}

impl<'a> MetricField<'a> {
    pub fn numeric<M: ModelDefinition + ?Sized>(model: &'a M, cfg: &GeometryConfig) -> Self {
        let cfg = cfg.clone();
        Self {
            chart: model.chart().clone(),
            provenance: Provenance::FibreEvaluated,
            eval: Box::new(move |t| Ok(metric_at(model, t, &cfg)?.metric)),
        }
    }

    pub fn oracle<M: ModelDefinition + ?Sized>(model: &'a M) -> Option<Self> {
        let oracle = model.oracle()?;
        let probe = model.chart().sample_centre();
        oracle.metric(&probe)?;
        Some(Self {
            chart: model.chart().clone(),
            provenance: Provenance::AnalyticOracle,
            eval: Box::new(move |t| {
                oracle
                    .metric(t)
                    .ok_or_else(|| GeomError::Unsupported("oracle metric unavailable".into()))
            }),
        })
    }

    pub fn from_fn(chart: &ChartSpec, f: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'a) -> Self {
        Self {
            chart: chart.clone(),
            provenance: Provenance::Custom,
            eval: Box::new(f),
        }
    }

    pub fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    pub fn at(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.chart.check(theta)?;
        (self.eval)(theta)
    }
}

/// θ ↦ ω^k_ij(θ).
pub struct ConnectionField<'a> {
    chart: ChartSpec,
    pub provenance: Provenance,
    eval: FieldFn<'a, Connection>,
}

impl<'a> ConnectionField<'a> {
    /// The primary probe family, without the metric or the consistency check.
    pub fn numeric<M: ModelDefinition + ?Sized>(model: &'a M, cfg: &GeometryConfig) -> Self {
        let cfg = cfg.clone();
        Self {
            chart: model.chart().clone(),
            provenance: Provenance::FibreEvaluated,
            eval: Box::new(move |t| {
                Ok(connection_from_probes(model, t, ProbeFamily::Primary, &cfg)?.connection)
            }),
        }
    }

    pub fn oracle<M: ModelDefinition + ?Sized>(model: &'a M) -> Option<Self> {
        let oracle = model.oracle()?;
        oracle.connection(&model.chart().sample_centre())?;
        Some(Self {
            chart: model.chart().clone(),
            provenance: Provenance::AnalyticOracle,
            eval: Box::new(move |t| {
                oracle
                    .connection(t)
                    .ok_or_else(|| GeomError::Unsupported("oracle connection unavailable".into()))
            }),
        })
    }

    pub fn from_fn(chart: &ChartSpec, f: impl Fn(&[f64]) -> Result<Connection> + Send + Sync + 'a) -> Self {
        Self {
            chart: chart.clone(),
            provenance: Provenance::Custom,
            eval: Box::new(f),
        }
    }

    pub fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn at(&self, theta: &[f64]) -> Result<Connection> {
        self.chart.check(theta)?;
        (self.eval)(theta)
    }
}

/// ∂_a of a connection field, indexed [a] → flattened ω.
fn connection_derivatives(field: &ConnectionField, theta: &[f64], diff: &DiffConfig) -> Result<Vec<Connection>> {
    let n = theta.len();
    (0..n)
        .map(|a| {
            let d = fd_field_derivative(|p| Ok(field.at(p)?.flat().to_vec()), theta, a, field.chart(), diff)?;
            Ok(Connection::from_flat(n, d))
        })
        .collect()
}

/// ∂_a g as matrices.
fn metric_derivatives(field: &MetricField, theta: &[f64], diff: &DiffConfig) -> Result<Vec<DMatrix<f64>>> {
    let n = theta.len();
    (0..n)
        .map(|a| {
            let d = fd_field_derivative(|p| Ok(field.at(p)?.as_slice().to_vec()), theta, a, field.chart(), diff)?;
            Ok(DMatrix::from_column_slice(n, n, &d))
        })
        .collect()
}

/// Ω^l_kij = ∂_i ω^l_jk − ∂_j ω^l_ik + ω^l_is ω^s_jk − ω^l_js ω^s_ik.
pub fn curvature(field: &ConnectionField, theta: &[f64], diff: &DiffConfig) -> Result<CurvatureTensor> {
    let n = theta.len();
    let w = field.at(theta)?;
    let dw = connection_derivatives(field, theta, diff)?;
    let mut r = CurvatureTensor::zeros(n);
    for l in 0..n {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = dw[i].get(l, j, k) - dw[j].get(l, i, k);
                    for s in 0..n {
                        v += w.get(l, i, s) * w.get(s, j, k) - w.get(l, j, s) * w.get(s, i, k);
                    }
                    r.set(l, k, i, j, v);
                }
            }
        }
    }
    Ok(r)
}

pub fn curvature_at(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    cfg: &GeometryConfig,
) -> Result<CurvatureTensor> {
    curvature(&ConnectionField::numeric(model, cfg), theta, &cfg.derivatives.diff)
}

#[derive(Clone, Debug, Serialize)]
pub struct CodazziResidual {
    /// C_abc at index (a·n + b)·n + c.
    pub components: Vec<f64>,
    pub max_abs: f64,
}

/// C_abc = ∂_a g_bc − ∂_b g_ac + g_ad ω^d_bc − g_bd ω^d_ac.
pub fn codazzi(
    metric: &MetricField,
    connection: &ConnectionField,
    theta: &[f64],
    diff: &DiffConfig,
) -> Result<CodazziResidual> {
    let n = theta.len();
    let g = metric.at(theta)?;
    let w = connection.at(theta)?;
    let dg = metric_derivatives(metric, theta, diff)?;
    let mut components = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut v = dg[a][(b, c)] - dg[b][(a, c)];
                for d in 0..n {
                    v += g[(a, d)] * w.get(d, b, c) - g[(b, d)] * w.get(d, a, c);
                }
                components[(a * n + b) * n + c] = v;
            }
        }
    }
    let max_abs = components.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(CodazziResidual { components, max_abs })
}

pub fn codazzi_residual(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    cfg: &GeometryConfig,
) -> Result<CodazziResidual> {
    codazzi(
        &MetricField::numeric(model, cfg),
        &ConnectionField::numeric(model, cfg),
        theta,
        &cfg.derivatives.diff,
    )
}

/// ϖ^d_ac = g^{db}(∂_a g_bc − g_ec ω^e_ab).
pub fn dual_connection(
    metric: &MetricField,
    connection: &ConnectionField,
    theta: &[f64],
    diff: &DiffConfig,
) -> Result<Connection> {
    let n = theta.len();
    let g = metric.at(theta)?;
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| GeomError::numerical("metric is singular"))?;
    let w = connection.at(theta)?;
    let dg = metric_derivatives(metric, theta, diff)?;
    Ok(Connection::from_fn(n, |d, a, c| {
        let mut s = 0.0;
        for b in 0..n {
            let mut inner = dg[a][(b, c)];
            for e in 0..n {
                inner -= g[(e, c)] * w.get(e, a, b);
            }
            s += ginv[(d, b)] * inner;
        }
        s
    }))
}

pub fn dual_connection_at(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    cfg: &GeometryConfig,
) -> Result<Connection> {
    dual_connection(
        &MetricField::numeric(model, cfg),
        &ConnectionField::numeric(model, cfg),
        theta,
        &cfg.derivatives.diff,
    )
}

/// ‖g(θ) − Jᵀ g′(Z(θ)) J‖ / ‖g(θ)‖ with J = ∂Z/∂θ and g′ the metric of the
/// reparametrised model.
pub fn metric_transform_check(
    model: Arc<dyn ModelDefinition>,
    map: Arc<dyn ChartMap>,
    theta: &[f64],
    cfg: &GeometryConfig,
) -> Result<f64> {
    let g = metric_at(model.as_ref(), theta, cfg)?.metric;
    let j = map.forward_jacobian(theta, model.chart())?;
    let zeta = map.forward(theta);
    let re = Reparametrised::new(model, map);
    let gz = metric_at(&re, &zeta, cfg)?.metric;
    let pulled = j.transpose() * gz * &j;
    Ok(max_abs(&(&g - pulled)) / max_abs(&g).max(f64::MIN_POSITIVE))
}

#[derive(Clone, Debug, Serialize)]
pub struct CramerRaoReport {
    pub trials: usize,
    /// min (vᵀgv)(wᵀgw) − (vᵀgw)².
    pub worst_margin: f64,
    /// min vᵀgv − (vᵀgw)²/(wᵀgw): the score-variance form with ∇²Φ = g.
    pub worst_normalised_margin: f64,
}

/// Cauchy–Schwarz margins of g over `trials` random vector pairs.
pub fn cauchy_schwarz_margins(g: &DMatrix<f64>, trials: usize, seed: u64) -> Result<CramerRaoReport> {
    check_positive_definite(g)?;
    let n = g.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut worst_norm = f64::INFINITY;
    for _ in 0..trials {
        let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let w = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let (vv, ww, vw) = ((g * &v).dot(&v), (g * &w).dot(&w), (g * &w).dot(&v));
        worst = worst.min(vv * ww - vw * vw);
        worst_norm = worst_norm.min(vv - vw * vw / ww);
    }
    Ok(CramerRaoReport {
        trials,
        worst_margin: worst,
        worst_normalised_margin: worst_norm,
    })
}

pub fn cramer_rao_check(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    trials: usize,
    seed: u64,
    cfg: &GeometryConfig,
) -> Result<CramerRaoReport> {
    cauchy_schwarz_margins(&metric_at(model, theta, cfg)?.metric, trials, seed)
}
