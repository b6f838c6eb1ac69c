//! Classification verdicts, affine coordinates, Massieu potentials and the
//! Pythagorean relation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::geometry::{
    codazzi, connection_from_probes, curvature, metric_at, probe_consistency, Condition4Evidence, ConnectionField,
    GeometryConfig, MetricField,
};
use crate::model::{divergence_gradient, divergence_hessian, evaluate_divergence, DivergenceKind, ModelDefinition, ProbeFamily};
use crate::numdiff::{fd_jacobian, DiffConfig};
use crate::tensor::{max_abs, relative_deviation, ser_matrices, Connection};
use crate::tolerance::Tolerances;
use crate::transport::l_path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotEvaluated,
}

impl Status {
    fn of(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentialFamily {
    Yes,
    No,
    NotApplicable,
}

/// A tolerance check aggregated over grid points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub status: Status,
    pub worst: Option<f64>,
    pub tolerance: f64,
}

impl Check {
    fn skipped(tolerance: f64) -> Self {
        Self {
            status: Status::NotEvaluated,
            worst: None,
            tolerance,
        }
    }

    fn over(values: impl Iterator<Item = f64>, tolerance: f64) -> Self {
        let worst = values.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        Self {
            status: match worst {
                Some(w) => Status::of(w <= tolerance),
                None => Status::NotEvaluated,
            },
            worst,
            tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointReport {
    pub theta: Vec<f64>,
    pub condition4: Status,
    pub condition4_deviation: f64,
    pub probe_consistency: Option<f64>,
    pub torsion: Option<f64>,
    pub curvature: Option<f64>,
    pub codazzi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Condition4Evidence>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometryReport {
    pub model: String,
    pub divergence: DivergenceKind,
    pub condition4: Check,
    /// Evidence from the worst Condition-4 failure.
    pub condition4_evidence: Option<Condition4Evidence>,
    pub probe_consistency: Check,
    /// Probe consistency, torsion, flatness and Codazzi together.
    pub hessian_structure: Status,
    pub torsionless: Check,
    pub flat: Check,
    pub codazzi: Check,
    pub exponential_family: ExponentialFamily,
    /// Short verdict: fail-cond4, yes, no, no-curved, n/a-flat, n/a-curved or n/a.
    pub label: String,
    pub tolerances: Tolerances,
    pub points: Vec<PointReport>,
}

fn classify_point(model: &(impl ModelDefinition + ?Sized), theta: &[f64], cfg: &GeometryConfig) -> Result<PointReport> {
    let mut report = PointReport {
        theta: theta.to_vec(),
        condition4: Status::Pass,
        condition4_deviation: 0.0,
        probe_consistency: None,
        torsion: None,
        curvature: None,
        codazzi: None,
        evidence: None,
    };
    match metric_at(model, theta, cfg) {
        Ok(m) => report.condition4_deviation = m.deviation,
        Err(GeomError::Condition4Violated(ev)) => {
            report.condition4 = Status::Fail;
            report.condition4_deviation = ev.deviation;
            report.evidence = Some(*ev);
            return Ok(report);
        }
        Err(e) => return Err(e),
    }
    let p = connection_from_probes(model, theta, ProbeFamily::Primary, cfg)?;
    let s = connection_from_probes(model, theta, ProbeFamily::Secondary, cfg)?;
    report.probe_consistency = Some(probe_consistency(&p.connection, &s.connection));
    report.torsion = Some(p.connection.torsion());
    let diff = &cfg.derivatives.diff;
    let field = ConnectionField::numeric(model, cfg);
    report.curvature = Some(curvature(&field, theta, diff)?.max_abs());
    report.codazzi = Some(codazzi(&MetricField::numeric(model, cfg), &field, theta, diff)?.max_abs);
    Ok(report)
}

/// Runs the metric, both probe families, curvature and Codazzi checks at every
/// grid point and combines them into a verdict. Condition-4 failures are data.
pub fn classify(
    model: &(impl ModelDefinition + ?Sized),
    grid: &[Vec<f64>],
    cfg: &GeometryConfig,
) -> Result<GeometryReport> {
    if grid.is_empty() {
        return Err(GeomError::Config("classification grid is empty".into()));
    }
    for p in grid {
        model.chart().check(p)?;
    }
    let points: Vec<PointReport> = grid
        .par_iter()
        .map(|t| classify_point(model, t, cfg))
        .collect::<Result<_>>()?;
    let tol = &cfg.tolerances;

    let condition4 = Check::over(points.iter().map(|p| p.condition4_deviation), tol.cond4);
    let condition4_evidence = points
        .iter()
        .filter_map(|p| p.evidence.as_ref())
        .max_by(|a, b| a.deviation.total_cmp(&b.deviation))
        .cloned();
    let kl = model.kind() == DivergenceKind::KullbackLeibler;

    let (probe, torsionless, flat, codazzi_check, hessian) = if condition4.status == Status::Pass {
        let probe = Check::over(points.iter().filter_map(|p| p.probe_consistency), tol.hess);
        let torsionless = Check::over(points.iter().filter_map(|p| p.torsion), tol.torsion);
        let flat = Check::over(points.iter().filter_map(|p| p.curvature), tol.flat);
        let cz = Check::over(points.iter().filter_map(|p| p.codazzi), tol.codazzi);
        let hessian = Status::of([&probe, &torsionless, &flat, &cz].iter().all(|c| c.status == Status::Pass));
        (probe, torsionless, flat, cz, hessian)
    } else {
        (
            Check::skipped(tol.hess),
            Check::skipped(tol.torsion),
            Check::skipped(tol.flat),
            Check::skipped(tol.codazzi),
            Status::NotEvaluated,
        )
    };

    let exponential_family = if !kl {
        ExponentialFamily::NotApplicable
    } else if hessian == Status::Pass && torsionless.status == Status::Pass && flat.status == Status::Pass {
        ExponentialFamily::Yes
    } else {
        ExponentialFamily::No
    };
    let label = if condition4.status == Status::Fail {
        "fail-cond4"
    } else if kl {
        match (exponential_family, flat.status) {
            (ExponentialFamily::Yes, _) => "yes",
            (_, Status::Fail) => "no-curved",
            _ => "no",
        }
    } else {
        match (hessian, flat.status) {
            (Status::Pass, _) => "n/a-flat",
            (_, Status::Fail) => "n/a-curved",
            _ => "n/a",
        }
    };

    Ok(GeometryReport {
        model: model.name().to_string(),
        divergence: model.kind(),
        condition4,
        condition4_evidence,
        probe_consistency: probe,
        hessian_structure: hessian,
        torsionless,
        flat,
        codazzi: codazzi_check,
        exponential_family,
        label: label.to_string(),
        tolerances: tol.clone(),
        points,
    })
}

/// RK4 along the straight chart segment a → b of y' = rhs(θ(s), Δ, y).
fn integrate_segment(
    a: &[f64],
    b: &[f64],
    y0: Vec<f64>,
    steps: usize,
    rhs: &dyn Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let delta: Vec<f64> = b.iter().zip(a).map(|(b, a)| b - a).collect();
    if delta.iter().all(|d| *d == 0.0) {
        return Ok(y0);
    }
    let steps = steps.max(1);
    let h = 1.0 / steps as f64;
    let at = |s: f64| -> Vec<f64> { a.iter().zip(&delta).map(|(a, d)| a + s * d).collect() };
    let add = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(y, k)| y + c * k).collect() };
    let mut y = y0;
    for i in 0..steps {
        let s = i as f64 * h;
        let k1 = rhs(&at(s), &delta, &y)?;
        let k2 = rhs(&at(s + 0.5 * h), &delta, &add(&y, &k1, 0.5 * h))?;
        let k3 = rhs(&at(s + 0.5 * h), &delta, &add(&y, &k2, 0.5 * h))?;
        let k4 = rhs(&at(s + h), &delta, &add(&y, &k3, h))?;
        for j in 0..y.len() {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    Ok(y)
}

fn integrate_path(
    path: &[Vec<f64>],
    y0: Vec<f64>,
    steps: usize,
    rhs: &dyn Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut y = y0;
    for w in path.windows(2) {
        y = integrate_segment(&w[0], &w[1], y, steps, rhs)?;
    }
    Ok(y)
}

/// Θ^j and G_b^j = ∂_bΘ^j at the end of `path`, with Θ(θ0) = 0 and G(θ0) = I.
/// State layout: Θ (n values) then G row-major by b.
pub fn affine_along(field: &ConnectionField, path: &[Vec<f64>], steps: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = field.dim();
    let mut y0 = vec![0.0; n + n * n];
    for b in 0..n {
        y0[n + b * n + b] = 1.0;
    }
    let rhs = |theta: &[f64], delta: &[f64], y: &[f64]| -> Result<Vec<f64>> {
        let w = field.at(theta)?;
        let g = |b: usize, j: usize| y[n + b * n + j];
        let mut out = vec![0.0; n + n * n];
        for j in 0..n {
            out[j] = (0..n).map(|a| delta[a] * g(a, j)).sum();
        }
        for b in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    for c in 0..n {
                        s += delta[a] * w.get(c, a, b) * g(c, j);
                    }
                }
                out[n + b * n + j] = s;
            }
        }
        Ok(out)
    };
    let y = integrate_path(path, y0, steps, &rhs)?;
    Ok((y[..n].to_vec(), DMatrix::from_row_slice(n, n, &y[n..])))
}

#[derive(Clone, Debug, Serialize)]
pub struct AffineCoordinateMap {
    pub theta0: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
    /// Θ at each target along the straight path.
    pub values: Vec<Vec<f64>>,
    /// G_b^j = ∂_bΘ^j at each target, rows b.
    #[serde(serialize_with = "ser_matrices")]
    pub gradients: Vec<DMatrix<f64>>,
    /// Straight against axis-aligned path, relative to the largest |Θ|.
    pub path_residual: f64,
}

/// Integrates ∂_a G_b = ω^c_ab G_c, ∂_a Θ = G_a from θ0 to every target.
pub fn affine_coordinates_with(
    field: &ConnectionField,
    theta0: &[f64],
    targets: &[Vec<f64>],
    steps: usize,
    path_tol: f64,
) -> Result<AffineCoordinateMap> {
    field.chart().check(theta0)?;
    let mut values = Vec::with_capacity(targets.len());
    let mut gradients = Vec::with_capacity(targets.len());
    let mut gap: f64 = 0.0;
    let mut scale = f64::MIN_POSITIVE;
    for t in targets {
        field.chart().check(t)?;
        let (v, g) = affine_along(field, &[theta0.to_vec(), t.clone()], steps)?;
        let (vl, _) = affine_along(field, &l_path(theta0, t), steps)?;
        for (a, b) in v.iter().zip(&vl) {
            gap = gap.max((a - b).abs());
            scale = scale.max(a.abs());
        }
        values.push(v);
        gradients.push(g);
    }
    let path_residual = gap / scale;
    if path_residual > path_tol {
        return Err(GeomError::NotFlat {
            residual: path_residual,
            tolerance: path_tol,
        });
    }
    Ok(AffineCoordinateMap {
        theta0: theta0.to_vec(),
        targets: targets.to_vec(),
        values,
        gradients,
        path_residual,
    })
}

pub fn affine_coordinates(
    model: &(impl ModelDefinition + ?Sized),
    theta0: &[f64],
    targets: &[Vec<f64>],
    cfg: &GeometryConfig,
) -> Result<AffineCoordinateMap> {
    affine_coordinates_with(
        &ConnectionField::numeric(model, cfg),
        theta0,
        targets,
        cfg.ode_steps,
        cfg.tolerances.path,
    )
}

/// Max |Γ′| of the connection rewritten in the integrated Θ chart at `target`,
/// using finite differences of G.
pub fn transformed_connection_residual(
    field: &ConnectionField,
    theta0: &[f64],
    target: &[f64],
    steps: usize,
    diff: &DiffConfig,
) -> Result<f64> {
    let n = field.dim();
    let g_at = |t: &[f64]| -> Result<DMatrix<f64>> { Ok(affine_along(field, &[theta0.to_vec(), t.to_vec()], steps)?.1) };
    let g = g_at(target)?;
    // dg[(b*n + k, a)] = ∂_a G_b^k
    let dg = fd_jacobian(
        |t| {
            let m = g_at(t)?;
            Ok((0..n * n).map(|i| m[(i / n, i % n)]).collect())
        },
        target,
        field.chart(),
        diff,
    )?;
    let w = field.at(target)?;
    let jinv = g
        .transpose()
        .try_inverse()
        .ok_or_else(|| GeomError::numerical("affine coordinate gradient is singular"))?;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let t = DMatrix::from_fn(n, n, |a, b| {
            (0..n).map(|c| w.get(c, a, b) * g[(c, k)]).sum::<f64>() - dg[(b * n + k, a)]
        });
        let gamma = jinv.transpose() * t * &jinv;
        worst = worst.max(max_abs(&gamma));
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct MassieuSample {
    pub theta0: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
    /// α_b = ∂_bΦ at each target.
    pub alpha: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    /// Straight against axis-aligned path for α, relative to the largest |α|.
    pub path_residual: f64,
    /// max |∂_aα_b − ∂_bα_a|.
    pub curl_residual: f64,
    /// max over targets of max |∇²Φ − g| / max |g|.
    pub hessian_residual: f64,
}

/// (Φ, α) at the end of `path` for ∂_a α_b = g_ab + ω^c_ab α_c, ∂_a Φ = α_a.
pub fn massieu_along(
    metric: &MetricField,
    connection: &ConnectionField,
    path: &[Vec<f64>],
    steps: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = connection.dim();
    let rhs = |theta: &[f64], delta: &[f64], y: &[f64]| -> Result<Vec<f64>> {
        let g = metric.at(theta)?;
        let w = connection.at(theta)?;
        let alpha = &y[1..];
        let mut out = vec![0.0; n + 1];
        out[0] = (0..n).map(|a| delta[a] * alpha[a]).sum();
        for b in 0..n {
            let mut s = 0.0;
            for a in 0..n {
                let mut inner = g[(a, b)];
                for c in 0..n {
                    inner += w.get(c, a, b) * alpha[c];
                }
                s += delta[a] * inner;
            }
            out[1 + b] = s;
        }
        Ok(out)
    };
    let y = integrate_path(path, vec![0.0; n + 1], steps, &rhs)?;
    Ok((y[0], y[1..].to_vec()))
}

pub fn massieu_with(
    metric: &MetricField,
    connection: &ConnectionField,
    theta0: &[f64],
    targets: &[Vec<f64>],
    steps: usize,
    cfg: &GeometryConfig,
) -> Result<MassieuSample> {
    let n = connection.dim();
    let chart = connection.chart();
    chart.check(theta0)?;
    let diff = &cfg.derivatives.diff;
    let mut alpha = Vec::new();
    let mut phi = Vec::new();
    let (mut gap, mut scale) = (0.0_f64, f64::MIN_POSITIVE);
    let (mut curl, mut hess) = (0.0_f64, 0.0_f64);
    for t in targets {
        chart.check(t)?;
        let (p, a) = massieu_along(metric, connection, &[theta0.to_vec(), t.clone()], steps)?;
        let (_, al) = massieu_along(metric, connection, &l_path(theta0, t), steps)?;
        for (x, y) in a.iter().zip(&al) {
            gap = gap.max((x - y).abs());
            scale = scale.max(x.abs());
        }
        // j[(b, a)] = ∂_a α_b
        let j = fd_jacobian(
            |q| Ok(massieu_along(metric, connection, &[theta0.to_vec(), q.to_vec()], steps)?.1),
            t,
            chart,
            diff,
        )?;
        let g = metric.at(t)?;
        let w = connection.at(t)?;
        let cov = DMatrix::from_fn(n, n, |x, y| {
            0.5 * (j[(y, x)] + j[(x, y)]) - (0..n).map(|c| w.get(c, x, y) * a[c]).sum::<f64>()
        });
        curl = curl.max(max_abs(&(&j - j.transpose())));
        hess = hess.max(max_abs(&(cov - &g)) / max_abs(&g));
        alpha.push(a);
        phi.push(p);
    }
    let path_residual = gap / scale;
    if path_residual > cfg.tolerances.path {
        return Err(GeomError::NotIntegrable {
            residual: path_residual,
            tolerance: cfg.tolerances.path,
        });
    }
    Ok(MassieuSample {
        theta0: theta0.to_vec(),
        targets: targets.to_vec(),
        alpha,
        phi,
        path_residual,
        curl_residual: curl,
        hessian_residual: hess,
    })
}

/// Φ with Φ(θ0) = 0, α(θ0) = 0, integrated from the numeric metric and connection.
pub fn massieu(
    model: &(impl ModelDefinition + ?Sized),
    theta0: &[f64],
    targets: &[Vec<f64>],
    cfg: &GeometryConfig,
) -> Result<MassieuSample> {
    massieu_with(
        &MetricField::numeric(model, cfg),
        &ConnectionField::numeric(model, cfg),
        theta0,
        targets,
        cfg.ode_steps,
        cfg,
    )
}

/// Least-squares fit of each component of `y` on [1, x]; returns the largest
/// absolute residual.
pub fn affine_fit_residual(y: &[Vec<f64>], x: &[Vec<f64>]) -> Result<f64> {
    if y.is_empty() || y.len() != x.len() {
        return Err(GeomError::Config("gauge fit needs matching non-empty samples".into()));
    }
    let m = y.len();
    let p = x[0].len() + 1;
    let design = DMatrix::from_fn(m, p, |r, c| if c == 0 { 1.0 } else { x[r][c - 1] });
    let svd = design.clone().svd(true, true);
    let mut worst: f64 = 0.0;
    for k in 0..y[0].len() {
        let rhs = DVector::from_fn(m, |r, _| y[r][k]);
        let coef = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| GeomError::numerical(format!("gauge fit: {e}")))?;
        let fitted = &design * coef;
        for r in 0..m {
            worst = worst.max((fitted[r] - rhs[r]).abs());
        }
    }
    Ok(worst)
}

/// max over components of (max − min), floor 1e-300.
pub fn spread(values: &[Vec<f64>]) -> f64 {
    let n = values.first().map_or(0, |v| v.len());
    (0..n)
        .map(|k| {
            let it = values.iter().map(|v| v[k]);
            let lo = it.clone().fold(f64::INFINITY, f64::min);
            let hi = it.fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(1e-300, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct PythagoreanReport {
    /// D(x‖m_other) − D(x‖m_θ) per fibre member.
    pub differences: Vec<f64>,
    /// max − min of the differences.
    pub deviation: f64,
    /// The induced proper divergence D(m_θ‖m_other).
    pub induced_divergence: f64,
}

pub fn pythagorean_check(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    other: &[f64],
    fibre_k: usize,
) -> Result<PythagoreanReport> {
    model.chart().check(other)?;
    let members = model.fibre(theta, fibre_k)?;
    if members.is_empty() {
        return Err(GeomError::FibreUnavailable(format!("{} has no fibre at {theta:?}", model.name())));
    }
    let differences = members
        .iter()
        .map(|x| Ok(evaluate_divergence(model, x, other)? - evaluate_divergence(model, x, theta)?))
        .collect::<Result<Vec<f64>>>()?;
    let lo = differences.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = differences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PythagoreanReport {
        induced_divergence: differences[0],
        deviation: hi - lo,
        differences,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InducedGeometry {
    pub metric_residual: f64,
    pub connection_residual: f64,
    pub connection: Connection,
}

/// Metric −∂_ξ∂_θ D̃ and connection −g⁻¹ ∂_ξ ∂_θ∂_θ D̃ of the induced divergence
/// D̃(ξ, θ) = D(x_ξ‖m_θ) − D(x_ξ‖m_ξ), compared with the fibre metric and the
/// primary probe connection.
pub fn induced_divergence_geometry_check(
    model: &(impl ModelDefinition + ?Sized),
    theta: &[f64],
    cfg: &GeometryConfig,
) -> Result<InducedGeometry> {
    let n = theta.len();
    let how = &cfg.derivatives;
    let member = |xi: &[f64]| -> Result<_> {
        model
            .fibre(xi, 1)?
            .into_iter()
            .next()
            .ok_or_else(|| GeomError::FibreUnavailable(format!("{} has no fibre at {xi:?}", model.name())))
    };
    let mixed = fd_jacobian(
        |xi| Ok(divergence_gradient(model, &member(xi)?, theta, how)?.as_slice().to_vec()),
        theta,
        model.chart(),
        &how.diff,
    )?;
    let g_induced = -(&mixed + mixed.transpose()) * 0.5;
    let third = fd_jacobian(
        |xi| {
            let h = divergence_hessian(model, &member(xi)?, theta, how)?;
            Ok((0..n * n).map(|i| h[(i / n, i % n)]).collect())
        },
        theta,
        model.chart(),
        &how.diff,
    )?;
    let ginv = g_induced
        .clone()
        .try_inverse()
        .ok_or_else(|| GeomError::numerical("induced metric is singular"))?;
    let connection = Connection::from_fn(n, |c, i, j| {
        -(0..n).map(|k| ginv[(c, k)] * third[(i * n + j, k)]).sum::<f64>()
    });
    let g = metric_at(model, theta, cfg)?.metric;
    let w = connection_from_probes(model, theta, ProbeFamily::Primary, cfg)?.connection;
    Ok(InducedGeometry {
        metric_residual: relative_deviation(g_induced.as_slice(), g.as_slice(), f64::MIN_POSITIVE),
        connection_residual: relative_deviation(connection.flat(), w.flat(), 1.0),
        connection,
    })
}
