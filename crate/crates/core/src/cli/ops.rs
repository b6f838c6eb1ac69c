use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{config_err, parse_grid, CliError, Op, RunConfig};
use crate::error::GeomError;
use crate::fit::{fit, FitOptions};
use crate::geometry::{
    codazzi_residual, connection_at, curvature, curvature_at, metric_at, ConnectionField, GeometryConfig,
};
use crate::model::{Derivatives, ModelDefinition};
use crate::models::{by_name, gce_covariant_field, gce_geodesic, CatalogueEntry};
use crate::structure::{
    affine_coordinates, affine_fit_residual, classify, induced_divergence_geometry_check, massieu,
    pythagorean_check, spread, transformed_connection_residual, Status,
};
use crate::tensor::{matrix_rows, relative_deviation};
use crate::transport::{covariant_constant_field, geodesic, parallel_transport, Trace, TraceKind, TraceSample};

pub(super) struct OpResult {
    pub model: String,
    pub inputs: Value,
    pub results: Value,
    pub residuals: Value,
    pub verdicts: Value,
    pub trace: Option<Trace>,
}

struct Body {
    results: Value,
    residuals: Value,
    verdicts: Value,
    trace: Option<Trace>,
}

impl Body {
    fn new(results: Value, residuals: Value, verdicts: Value) -> Self {
        Self {
            results,
            residuals,
            verdicts,
            trace: None,
        }
    }
}

pub(crate) fn geometry_config(cfg: &RunConfig) -> GeometryConfig {
    GeometryConfig {
        fibre_k: cfg.fibre_k.unwrap_or(3),
        derivatives: if cfg.finite_difference {
            Derivatives::finite_difference()
        } else {
            Derivatives::default()
        },
        tolerances: cfg.tolerances.clone(),
        ..GeometryConfig::default()
    }
}

pub(crate) fn grid_points(cfg: &RunConfig, model: &dyn ModelDefinition) -> Result<Vec<Vec<f64>>, CliError> {
    match cfg.grid.as_deref() {
        None | Some("default") => Ok(model.default_grid()),
        Some(s) => parse_grid(s),
    }
}

/// `n` seeded random chart points.
pub(crate) fn random_points(model: &dyn ModelDefinition, seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| model.sample_point(&mut rng)).collect()
}

fn evaluation_points(cfg: &RunConfig, model: &dyn ModelDefinition) -> Result<Vec<Vec<f64>>, CliError> {
    match &cfg.start {
        Some(s) => Ok(vec![s.clone()]),
        None => grid_points(cfg, model),
    }
}

/// `--start`, else the middle of the default grid (on the fibre curve for gumbel).
fn start_point(cfg: &RunConfig, model: &dyn ModelDefinition) -> Vec<f64> {
    cfg.start.clone().unwrap_or_else(|| {
        let grid = model.default_grid();
        grid.get(grid.len() / 2).cloned().unwrap_or_else(|| model.chart().sample_centre())
    })
}

/// Connection-based ops need Condition 4 at their base point.
fn require_condition4(model: &dyn ModelDefinition, theta: &[f64], gc: &GeometryConfig) -> Result<(), CliError> {
    metric_at(model, theta, gc)?;
    Ok(())
}

fn required<'a, T>(v: &'a Option<T>, flag: &str, op: Op) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| config_err(format!("--{flag} is required for --op {}", op.name())))
}

fn check_dim(v: &[f64], n: usize, what: &str) -> Result<(), CliError> {
    if v.len() == n {
        Ok(())
    } else {
        Err(config_err(format!("{what} has {} components, the chart has {n}", v.len())))
    }
}

/// Verdict-type errors become report data instead of failures.
fn verdict_of(e: &GeomError) -> Option<Value> {
    match e {
        GeomError::Condition4Violated(ev) => Some(json!({ "condition4": "fail", "evidence": ev })),
        GeomError::HessianStructureViolated { deviation, tolerance } => Some(json!({
            "hessian_structure": "fail", "probe_consistency": deviation, "tolerance": tolerance
        })),
        GeomError::NotFlat { residual, tolerance } => Some(json!({
            "flat": "fail", "path_residual": residual, "tolerance": tolerance
        })),
        GeomError::NotIntegrable { residual, tolerance } => Some(json!({
            "integrable": "fail", "path_residual": residual, "tolerance": tolerance
        })),
        _ => None,
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

pub(super) fn execute(op: Op, cfg: &RunConfig) -> Result<OpResult, CliError> {
    let name = cfg.model.as_deref().ok_or_else(|| config_err("--model is required"))?;
    let entry = by_name(name, &cfg.params)?;
    let inputs = json!({
        "params": cfg.params,
        "grid": cfg.grid,
        "start": cfg.start,
        "velocity": cfg.velocity,
        "t": cfg.t,
        "targets": cfg.targets,
        "other": cfg.other,
        "path": cfg.path,
        "data": cfg.data,
        "seed": cfg.seed,
        "fibre_k": cfg.fibre_k.unwrap_or(3),
        "finite_difference": cfg.finite_difference,
        "step": cfg.step,
    });
    let body = match dispatch(op, cfg, &entry) {
        Ok(b) => b,
        Err(CliError::Geom(e)) => match verdict_of(&e) {
            Some(v) => Body::new(Value::Null, json!({}), v),
            None => return Err(CliError::Geom(e)),
        },
        Err(e) => return Err(e),
    };
    Ok(OpResult {
        model: entry.model.name().to_string(),
        inputs,
        results: body.results,
        residuals: body.residuals,
        verdicts: body.verdicts,
        trace: body.trace,
    })
}

fn dispatch(op: Op, cfg: &RunConfig, entry: &CatalogueEntry) -> Result<Body, CliError> {
    let model = entry.model.as_ref();
    let gc = geometry_config(cfg);
    match op {
        Op::Fit => op_fit(cfg, model, &gc),
        Op::Metric => op_metric(cfg, model, &gc),
        Op::Connection => op_connection(cfg, model, &gc),
        Op::Curvature => op_curvature(cfg, model, &gc),
        Op::Classify => op_classify(cfg, entry, &gc),
        Op::Affine => op_affine(cfg, model, &gc),
        Op::Massieu => op_massieu(cfg, model, &gc),
        Op::Geodesic => op_geodesic(cfg, model, &gc),
        Op::Transport => op_transport(cfg, model, &gc),
        Op::Field => op_field(cfg, model, &gc),
        Op::Pythagoras => op_pythagoras(cfg, model, &gc),
        Op::Report => Err(config_err("report is handled by report_all")),
    }
}

fn op_fit(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let data = match &cfg.data {
        Some(d) => d.clone(),
        None => {
            let theta = random_points(model, cfg.seed, 1).remove(0);
            model
                .fibre(&theta, 1)?
                .into_iter()
                .next()
                .ok_or_else(|| config_err("model has no fibre member to fit; pass --data"))?
        }
    };
    let start = start_point(cfg, model);
    let opts = FitOptions {
        grad_tol: cfg.tolerances.grad,
        derivatives: gc.derivatives.clone(),
        ..FitOptions::default()
    };
    let r = fit(model, &data, &start, &opts)?;
    let closed = model.closed_form_fit(&data).ok();
    let gap = closed.as_ref().map(|c| relative_deviation(&r.theta_star.coords, c, 1.0));
    Ok(Body::new(
        json!({ "fit": r, "closed_form": closed, "data": data }),
        json!({ "gradient_norm": r.gradient_norm, "closed_form_gap": gap }),
        json!({ "converged": r.converged }),
    ))
}

fn op_metric(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let mut rows = Vec::new();
    let (mut worst_c4, mut worst_oracle) = (0.0_f64, None::<f64>);
    for p in evaluation_points(cfg, model)? {
        let m = metric_at(model, &p, gc)?;
        let oracle = model.oracle().and_then(|o| o.metric(&p));
        let dev = oracle.as_ref().map(|o| relative_deviation(m.metric.as_slice(), o.as_slice(), f64::MIN_POSITIVE));
        worst_c4 = worst_c4.max(m.deviation);
        if let Some(d) = dev {
            worst_oracle = Some(worst_oracle.map_or(d, |w| w.max(d)));
        }
        rows.push(json!({
            "theta": p,
            "metric": matrix_rows(&m.metric),
            "condition4_deviation": m.deviation,
            "members": m.members,
            "oracle": oracle.as_ref().map(matrix_rows),
            "oracle_residual": dev,
        }));
    }
    Ok(Body::new(
        json!({ "points": rows }),
        json!({ "condition4": worst_c4, "oracle_metric": worst_oracle }),
        json!({ "condition4": pass(worst_c4 <= gc.tolerances.cond4) }),
    ))
}

fn op_connection(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let mut rows = Vec::new();
    let (mut worst_probe, mut worst_torsion, mut worst_oracle) = (0.0_f64, 0.0_f64, None::<f64>);
    for p in evaluation_points(cfg, model)? {
        let c = connection_at(model, &p, gc)?;
        let oracle = model.oracle().and_then(|o| o.connection(&p));
        let dev = oracle.as_ref().map(|o| c.connection.max_abs_diff(o) / o.max_abs().max(1.0));
        worst_probe = worst_probe.max(c.probe_consistency);
        worst_torsion = worst_torsion.max(c.torsion);
        if let Some(d) = dev {
            worst_oracle = Some(worst_oracle.map_or(d, |w| w.max(d)));
        }
        rows.push(json!({
            "theta": p,
            "connection": c.connection,
            "secondary": c.secondary,
            "probe_consistency": c.probe_consistency,
            "torsion": c.torsion,
            "probe_condition": c.condition,
            "oracle": oracle,
            "oracle_residual": dev,
        }));
    }
    Ok(Body::new(
        json!({ "points": rows }),
        json!({ "probe_consistency": worst_probe, "torsion": worst_torsion, "oracle_connection": worst_oracle }),
        json!({
            "condition4": "pass",
            "hessian_structure": "pass",
            "torsionless": pass(worst_torsion <= gc.tolerances.torsion),
        }),
    ))
}

fn op_curvature(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let mut rows = Vec::new();
    let (mut worst_r, mut worst_c) = (0.0_f64, 0.0_f64);
    let oracle_field = ConnectionField::oracle(model);
    for p in evaluation_points(cfg, model)? {
        let r = curvature_at(model, &p, gc)?;
        let c = codazzi_residual(model, &p, gc)?;
        let oracle = match &oracle_field {
            Some(f) => Some(curvature(f, &p, &gc.derivatives.diff)?),
            None => None,
        };
        worst_r = worst_r.max(r.max_abs());
        worst_c = worst_c.max(c.max_abs);
        rows.push(json!({
            "theta": p,
            "curvature": r,
            "max_curvature": r.max_abs(),
            "codazzi": c.max_abs,
            "oracle_curvature": oracle,
        }));
    }
    Ok(Body::new(
        json!({ "points": rows }),
        json!({ "curvature": worst_r, "codazzi": worst_c }),
        json!({
            "flat": pass(worst_r <= gc.tolerances.flat),
            "codazzi": pass(worst_c <= gc.tolerances.codazzi),
        }),
    ))
}

fn op_classify(cfg: &RunConfig, entry: &CatalogueEntry, gc: &GeometryConfig) -> Result<Body, CliError> {
    let model = entry.model.as_ref();
    let grid = grid_points(cfg, model)?;
    let r = classify(model, &grid, gc)?;
    let status = |s: Status| serde_json::to_value(s).expect("status serialises");
    let verdicts = json!({
        "label": r.label,
        "expected_label": entry.expected_label,
        "matches_expected": r.label == entry.expected_label,
        "condition4": status(r.condition4.status),
        "hessian_structure": status(r.hessian_structure),
        "torsionless": status(r.torsionless.status),
        "flat": status(r.flat.status),
        "codazzi": status(r.codazzi.status),
        "exponential_family": r.exponential_family,
        "evidence_ratio": r.condition4_evidence.as_ref().and_then(|e| e.evidence_ratio),
    });
    let residuals = json!({
        "condition4": r.condition4.worst,
        "probe_consistency": r.probe_consistency.worst,
        "torsion": r.torsionless.worst,
        "curvature": r.flat.worst,
        "codazzi": r.codazzi.worst,
    });
    Ok(Body::new(serde_json::to_value(&r).expect("report serialises"), residuals, verdicts))
}

fn targets_of(cfg: &RunConfig, model: &dyn ModelDefinition) -> Vec<Vec<f64>> {
    cfg.targets.clone().unwrap_or_else(|| random_points(model, cfg.seed, 10))
}

/// Gauge-fitted residual of `reference` against `values` over θ0 and the targets.
fn gauge_residual(reference: &[Vec<f64>], values: &[Vec<f64>]) -> Result<f64, CliError> {
    Ok(affine_fit_residual(reference, values)? / spread(reference))
}

fn op_affine(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let theta0 = start_point(cfg, model);
    let targets = targets_of(cfg, model);
    require_condition4(model, &theta0, gc)?;
    let map = affine_coordinates(model, &theta0, &targets, gc)?;
    let field = ConnectionField::numeric(model, gc);
    let mut transformed = 0.0_f64;
    for t in &targets {
        transformed = transformed.max(transformed_connection_residual(
            &field,
            &theta0,
            t,
            gc.ode_steps,
            &gc.derivatives.diff,
        )?);
    }
    let oracle = model.oracle();
    let gauge = match oracle.and_then(|o| o.affine_coordinates(&theta0)) {
        Some(_) => {
            let o = oracle.expect("checked above");
            let mut reference = vec![o.affine_coordinates(&theta0).expect("checked above")];
            let mut values = vec![vec![0.0; theta0.len()]];
            for (t, v) in targets.iter().zip(&map.values) {
                reference.push(o.affine_coordinates(t).ok_or_else(|| config_err("oracle unavailable"))?);
                values.push(v.clone());
            }
            Some(gauge_residual(&reference, &values)?)
        }
        None => None,
    };
    let trace = Trace {
        kind: TraceKind::AffineGrid,
        coordinate_names: model.chart().names.clone(),
        vector_names: (1..=theta0.len()).map(|j| format!("Theta_{j}")).collect(),
        samples: targets
            .iter()
            .zip(&map.values)
            .enumerate()
            .map(|(i, (t, v))| TraceSample {
                t: i as f64,
                theta: t.clone(),
                vector: Some(v.clone()),
            })
            .collect(),
        step: 1.0 / gc.ode_steps as f64,
        order: 4,
        domain_exit: None,
        residual: Some(map.path_residual),
    };
    let mut body = Body::new(
        serde_json::to_value(&map).expect("map serialises"),
        json!({ "path": map.path_residual, "transformed_connection": transformed, "oracle_gauge": gauge }),
        json!({ "flat": "pass" }),
    );
    body.trace = Some(trace);
    Ok(body)
}

fn op_massieu(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let theta0 = start_point(cfg, model);
    let targets = targets_of(cfg, model);
    let sample = massieu(model, &theta0, &targets, gc)?;
    let gauge = match model.oracle() {
        Some(o) if o.massieu(&theta0).is_some() => {
            let coords = |t: &[f64]| o.affine_coordinates(t).unwrap_or_else(|| t.to_vec());
            let mut diff = vec![vec![o.massieu(&theta0).expect("checked above")]];
            let mut reference = diff.clone();
            let mut regressors = vec![coords(&theta0)];
            for (t, phi) in targets.iter().zip(&sample.phi) {
                let r = o.massieu(t).ok_or_else(|| config_err("oracle unavailable"))?;
                reference.push(vec![r]);
                diff.push(vec![r - phi]);
                regressors.push(coords(t));
            }
            Some(affine_fit_residual(&diff, &regressors)? / spread(&reference))
        }
        _ => None,
    };
    Ok(Body::new(
        serde_json::to_value(&sample).expect("sample serialises"),
        json!({
            "path": sample.path_residual,
            "curl": sample.curl_residual,
            "hessian": sample.hessian_residual,
            "oracle_gauge": gauge,
        }),
        json!({
            "integrable": "pass",
            "hessian_matches_metric": pass(sample.hessian_residual <= gc.tolerances.massieu_hessian),
        }),
    ))
}

fn op_geodesic(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let theta0 = start_point(cfg, model);
    let v0 = required(&cfg.velocity, "velocity", Op::Geodesic)?;
    check_dim(v0, theta0.len(), "velocity")?;
    let t_end = cfg.t.unwrap_or(1.0);
    require_condition4(model, &theta0, gc)?;
    let field = ConnectionField::numeric(model, gc);
    let trace = geodesic(&field, &theta0, v0, t_end, cfg.step)?;
    let last = trace.last().expect("geodesic has samples").clone();
    let closed = (model.name() == "gce").then(|| gce_geodesic(&theta0, v0, last.t));
    let gap = closed.map(|c| relative_deviation(&last.theta, &c, 1.0));
    let mut body = Body::new(
        json!({
            "endpoint": last.theta,
            "t_end": last.t,
            "samples": trace.samples.len(),
            "step": trace.step,
            "domain_exit": trace.domain_exit,
            "closed_form_endpoint": closed,
        }),
        json!({ "closed_form": gap }),
        json!({ "stayed_in_chart": trace.domain_exit.is_none() }),
    );
    body.trace = Some(trace);
    Ok(body)
}

fn op_transport(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let path = required(&cfg.path, "path", Op::Transport)?;
    if path.len() < 2 {
        return Err(config_err("--path needs at least two vertices"));
    }
    let v0 = required(&cfg.velocity, "velocity", Op::Transport)?;
    check_dim(v0, path[0].len(), "vector")?;
    require_condition4(model, &path[0], gc)?;
    let steps = cfg.step.map_or(gc.ode_steps, |h| (1.0 / h).round().max(1.0) as usize);
    let field = ConnectionField::numeric(model, gc);
    let trace = parallel_transport(&field, path, v0, steps)?;
    let end = trace.last().and_then(|s| s.vector.clone()).expect("transport has samples");
    let closed = (model.name() == "gce").then(|| gce_covariant_field(&path[0], v0, path.last().expect("non-empty")));
    let gap = closed.map(|c| relative_deviation(&end, &c, 1.0));
    let mut body = Body::new(
        json!({ "final_vector": end, "samples": trace.samples.len(), "closed_form": closed }),
        json!({ "closed_form": gap }),
        json!({}),
    );
    body.trace = Some(trace);
    Ok(body)
}

fn op_field(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let theta0 = start_point(cfg, model);
    let v0 = required(&cfg.velocity, "velocity", Op::Field)?;
    check_dim(v0, theta0.len(), "vector")?;
    let grid = grid_points(cfg, model)?;
    require_condition4(model, &theta0, gc)?;
    let field = ConnectionField::numeric(model, gc);
    let trace = covariant_constant_field(&field, &theta0, v0, &grid, gc.ode_steps, gc.tolerances.field)?;
    let gap = (model.name() == "gce").then(|| {
        trace.samples.iter().fold(0.0_f64, |m, s| {
            let c = gce_covariant_field(&theta0, v0, &s.theta);
            let v = s.vector.as_ref().expect("field samples carry vectors");
            m.max((v[0] - c[0]).abs()).max((v[1] - c[1]).abs())
        })
    });
    let mut body = Body::new(
        json!({ "points": trace.samples.len(), "spot_check_residual": trace.residual }),
        json!({ "spot_check": trace.residual, "closed_form": gap }),
        json!({ "flat": "pass" }),
    );
    body.trace = Some(trace);
    Ok(body)
}

fn op_pythagoras(cfg: &RunConfig, model: &dyn ModelDefinition, gc: &GeometryConfig) -> Result<Body, CliError> {
    let theta = start_point(cfg, model);
    let other = required(&cfg.other, "other", Op::Pythagoras)?;
    let p = pythagorean_check(model, &theta, other, gc.fibre_k)?;
    let fibre_verdict = pass(p.deviation <= 1e-6);
    let induced = match induced_divergence_geometry_check(model, &theta, gc) {
        Ok(i) => i,
        Err(e) => match verdict_of(&e) {
            Some(mut v) => {
                v["fibre_constant"] = json!(fibre_verdict);
                return Ok(Body::new(
                    json!({ "pythagorean": p, "induced_geometry": Value::Null }),
                    json!({ "fibre_constancy": p.deviation }),
                    v,
                ));
            }
            None => return Err(e.into()),
        },
    };
    Ok(Body::new(
        json!({ "pythagorean": p, "induced_geometry": induced }),
        json!({
            "fibre_constancy": p.deviation,
            "induced_metric": induced.metric_residual,
            "induced_connection": induced.connection_residual,
        }),
        json!({ "fibre_constant": fibre_verdict }),
    ))
}
