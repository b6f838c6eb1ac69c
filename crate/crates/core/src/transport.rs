//! Geodesics, parallel transport and covariant-constant fields for any
//! connection field, by fixed-step RK4.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::geometry::ConnectionField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Geodesic,
    ParallelTransport,
    CovariantField,
    AffineGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub theta: Vec<f64>,
    pub vector: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trace {
    pub kind: TraceKind,
    pub coordinate_names: Vec<String>,
    /// Column names of the vector part, if any.
    pub vector_names: Vec<String>,
    pub samples: Vec<TraceSample>,
    pub step: f64,
    pub order: u32,
    /// Set when integration stopped early because the path left the chart.
    pub domain_exit: Option<String>,
    /// Second-path spot-check residual, for covariant fields.
    pub residual: Option<f64>,
}

impl Trace {
    fn new(kind: TraceKind, field: &ConnectionField, with_vector: bool, step: f64) -> Self {
        let names = field.chart().names.clone();
        let vector_names = if with_vector {
            names.iter().map(|n| format!("v_{n}")).collect()
        } else {
            Vec::new()
        };
        Self {
            kind,
            coordinate_names: names,
            vector_names,
            samples: Vec::new(),
            step,
            order: 4,
            domain_exit: None,
            residual: None,
        }
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    /// `t,<coords>,<vector>` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for n in self.coordinate_names.iter().chain(&self.vector_names) {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{:.16e}", s.t);
            for v in s.theta.iter().chain(s.vector.iter().flatten()) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

/// One RK4 step of y' = f(y); `None` when a stage leaves the chart.
fn rk4_step(
    y: &[f64],
    h: f64,
    f: &dyn Fn(&[f64]) -> Result<Option<Vec<f64>>>,
) -> Result<Option<Vec<f64>>> {
    let Some(k1) = f(y)? else { return Ok(None) };
    let Some(k2) = f(&axpy(y, 0.5 * h, &k1))? else { return Ok(None) };
    let Some(k3) = f(&axpy(y, 0.5 * h, &k2))? else { return Ok(None) };
    let Some(k4) = f(&axpy(y, h, &k3))? else { return Ok(None) };
    Ok(Some(
        (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect(),
    ))
}

/// θ̈^k = −ω^k_ij θ̇^i θ̇^j from (θ0, v0) over t ∈ [0, t_end]. Leaving the chart
/// ends the trace early with `domain_exit` set.
pub fn geodesic(
    field: &ConnectionField,
    theta0: &[f64],
    v0: &[f64],
    t_end: f64,
    step: Option<f64>,
) -> Result<Trace> {
    let n = field.dim();
    field.chart().check(theta0)?;
    if v0.len() != n || !t_end.is_finite() {
        return Err(GeomError::Config("geodesic needs a velocity of chart dimension and finite t".into()));
    }
    let step = step.unwrap_or(1e-3 * t_end.abs());
    let steps = if t_end == 0.0 {
        0
    } else {
        if !(step > 0.0) {
            return Err(GeomError::Config(format!("step must be positive, got {step}")));
        }
        (t_end.abs() / step).ceil().max(1.0) as usize
    };
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let mut trace = Trace::new(TraceKind::Geodesic, field, true, h.abs());
    let rhs = |y: &[f64]| -> Result<Option<Vec<f64>>> {
        let (theta, v) = y.split_at(n);
        if !field.chart().contains(theta) {
            return Ok(None);
        }
        let acc = field.at(theta)?.contract(v, v);
        Ok(Some(v.iter().copied().chain(acc.iter().map(|a| -a)).collect()))
    };
    let mut y: Vec<f64> = theta0.iter().chain(v0).copied().collect();
    trace.samples.push(TraceSample {
        t: 0.0,
        theta: theta0.to_vec(),
        vector: Some(v0.to_vec()),
    });
    for i in 0..steps {
        match rk4_step(&y, h, &rhs)? {
            Some(next) if field.chart().contains(&next[..n]) => y = next,
            _ => {
                trace.domain_exit = Some(format!("left chart `{}` after t = {}", field.chart().id, i as f64 * h));
                break;
            }
        }
        trace.samples.push(TraceSample {
            t: (i + 1) as f64 * h,
            theta: y[..n].to_vec(),
            vector: Some(y[n..].to_vec()),
        });
    }
    Ok(trace)
}

/// Transports `v` along the chart-straight segment a → b in `steps` RK4 steps,
/// calling `visit(s, θ(s), v(s))` after each step.
fn transport_segment(
    field: &ConnectionField,
    a: &[f64],
    b: &[f64],
    v: &[f64],
    steps: usize,
    visit: &mut dyn FnMut(f64, &[f64], &[f64]),
) -> Result<Vec<f64>> {
    let delta: Vec<f64> = b.iter().zip(a).map(|(b, a)| b - a).collect();
    let n = a.len();
    let steps = steps.max(1);
    let h = 1.0 / steps as f64;
    // State: (s, v); θ(s) = a + sΔ.
    let rhs = |y: &[f64]| -> Result<Option<Vec<f64>>> {
        let theta = axpy(a, y[0], &delta);
        if !field.chart().contains(&theta) {
            return Ok(None);
        }
        let dv = field.at(&theta)?.contract(&delta, &y[1..]);
        Ok(Some(std::iter::once(1.0).chain(dv.iter().map(|d| -d)).collect()))
    };
    let mut y: Vec<f64> = std::iter::once(0.0).chain(v.iter().copied()).collect();
    for i in 0..steps {
        y = rk4_step(&y, h, &rhs)?.ok_or_else(|| GeomError::Domain {
            chart: field.chart().id.clone(),
            coords: axpy(a, (i as f64 + 0.5) * h, &delta),
        })?;
        let s = (i + 1) as f64 * h;
        visit(s, &axpy(a, s, &delta), &y[1..]);
    }
    debug_assert_eq!(y.len(), n + 1);
    Ok(y[1..].to_vec())
}

/// dY^j/ds = −ω^j_ik (dθ^i/ds) Y^k along a piecewise-straight chart path.
pub fn parallel_transport(
    field: &ConnectionField,
    path: &[Vec<f64>],
    v0: &[f64],
    steps_per_segment: usize,
) -> Result<Trace> {
    if path.is_empty() || v0.len() != field.dim() {
        return Err(GeomError::Config("transport needs a non-empty path and a vector of chart dimension".into()));
    }
    for p in path {
        field.chart().check(p)?;
    }
    let mut trace = Trace::new(TraceKind::ParallelTransport, field, true, 1.0 / steps_per_segment.max(1) as f64);
    trace.samples.push(TraceSample {
        t: 0.0,
        theta: path[0].clone(),
        vector: Some(v0.to_vec()),
    });
    let mut v = v0.to_vec();
    for (k, w) in path.windows(2).enumerate() {
        let samples = &mut trace.samples;
        v = transport_segment(field, &w[0], &w[1], &v, steps_per_segment, &mut |s, th, vv| {
            samples.push(TraceSample {
                t: k as f64 + s,
                theta: th.to_vec(),
                vector: Some(vv.to_vec()),
            })
        })?;
    }
    Ok(trace)
}

/// Transport of `v` from a to b along the straight chart path.
pub fn transport_straight(field: &ConnectionField, a: &[f64], b: &[f64], v: &[f64], steps: usize) -> Result<Vec<f64>> {
    transport_segment(field, a, b, v, steps, &mut |_, _, _| {})
}

/// Axis-aligned path a → b changing one coordinate at a time.
pub fn l_path(a: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![a.to_vec()];
    let mut p = a.to_vec();
    for i in 0..a.len() {
        if p[i] != b[i] {
            p[i] = b[i];
            out.push(p.clone());
        }
    }
    out
}

/// Parallel-transports `v0` from θ0 to every grid point along straight paths,
/// then re-derives three spread-out points along axis-aligned paths.
pub fn covariant_constant_field(
    field: &ConnectionField,
    theta0: &[f64],
    v0: &[f64],
    grid: &[Vec<f64>],
    steps: usize,
    tolerance: f64,
) -> Result<Trace> {
    field.chart().check(theta0)?;
    if v0.len() != field.dim() {
        return Err(GeomError::Config("seed vector must have chart dimension".into()));
    }
    let mut trace = Trace::new(TraceKind::CovariantField, field, true, 1.0 / steps.max(1) as f64);
    for (i, p) in grid.iter().enumerate() {
        field.chart().check(p)?;
        let v = transport_straight(field, theta0, p, v0, steps)?;
        trace.samples.push(TraceSample {
            t: i as f64,
            theta: p.clone(),
            vector: Some(v),
        });
    }
    let scale = trace
        .samples
        .iter()
        .flat_map(|s| s.vector.iter().flatten())
        .chain(v0)
        .fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
    let mut residual: f64 = 0.0;
    if !grid.is_empty() {
        let m = grid.len();
        let mut picks = vec![m / 4, m / 2, (3 * m) / 4];
        picks.dedup();
        for i in picks {
            let path = l_path(theta0, &grid[i]);
            let mut v = v0.to_vec();
            for w in path.windows(2) {
                v = transport_straight(field, &w[0], &w[1], &v, steps)?;
            }
            let straight = trace.samples[i].vector.as_ref().expect("field samples carry vectors");
            for (a, b) in v.iter().zip(straight) {
                residual = residual.max((a - b).abs() / scale);
            }
        }
    }
    trace.residual = Some(residual);
    if residual > tolerance {
        return Err(GeomError::NotFlat { residual, tolerance });
    }
    Ok(trace)
}
