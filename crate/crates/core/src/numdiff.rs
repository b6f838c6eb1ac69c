//! Finite differences on a chart: central stencils with one Richardson level,
//! one-sided second-order stencils near domain bounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chart::ChartSpec;
use crate::error::{GeomError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffConfig {
    /// Step as a fraction of the coordinate scale.
    pub rel_step: f64,
    pub abs_step_floor: f64,
    pub richardson: bool,
    /// Per-coordinate characteristic lengths; default max(|θ_i|, 1).
    pub scale: Option<Vec<f64>>,
    /// Relative disagreement allowed between the two Richardson levels.
    pub level_tol: f64,
    /// Absolute disagreement always allowed; covers fields that vanish.
    pub level_floor: f64,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self {
            rel_step: 1e-4,
            abs_step_floor: 1e-7,
            richardson: true,
            scale: None,
            level_tol: 1e-3,
            level_floor: 1e-6,
        }
    }
}

impl DiffConfig {
    pub fn scale_of(&self, theta: &[f64], i: usize) -> f64 {
        match &self.scale {
            Some(s) => s[i],
            None => theta[i].abs().max(1.0),
        }
    }

    pub fn step(&self, theta: &[f64], i: usize) -> f64 {
        (self.rel_step * self.scale_of(theta, i)).max(self.abs_step_floor)
    }

    pub fn with_rel_step(&self, rel_step: f64) -> Self {
        Self {
            rel_step,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stencil {
    Central,
    Forward,
    Backward,
}

/// Derivative at `t0` of a vector-valued function of one variable living on
/// the open interval `bounds`.
///
/// `char_len` sets the scale of the Richardson agreement test: the two levels
/// must agree to `level_tol · max(|f'|, |f|/char_len) + level_floor`.
pub fn derivative_1d<F>(
    f: F,
    t0: f64,
    h: f64,
    bounds: (f64, f64),
    char_len: f64,
    cfg: &DiffConfig,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let (lo, hi) = bounds;
    let (dlo, dhi) = (t0 - lo, hi - t0);
    if !(dlo > 0.0 && dhi > 0.0) {
        return Err(GeomError::numerical(format!("stencil centre {t0} outside ({lo}, {hi})")));
    }
    let mut h = h;
    let stencil = if dlo > 2.0 * h && dhi > 2.0 * h {
        Stencil::Central
    } else if dhi > 4.0 * h {
        Stencil::Forward
    } else if dlo > 4.0 * h {
        Stencil::Backward
    } else {
        h = dlo.min(dhi) / 2.5;
        Stencil::Central
    };

    let f0 = f(t0)?;
    let m = f0.len();
    let eval = |t: f64| -> Result<Vec<f64>> {
        let v = f(t)?;
        if v.len() != m {
            return Err(GeomError::numerical("field changed size across the stencil"));
        }
        Ok(v)
    };
    let estimate = |h: f64| -> Result<Vec<f64>> {
        Ok(match stencil {
            Stencil::Central => {
                let (a, b) = (eval(t0 + h)?, eval(t0 - h)?);
                a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            }
            Stencil::Forward => {
                let (a, b) = (eval(t0 + h)?, eval(t0 + 2.0 * h)?);
                (0..m)
                    .map(|c| (-3.0 * f0[c] + 4.0 * a[c] - b[c]) / (2.0 * h))
                    .collect()
            }
            Stencil::Backward => {
                let (a, b) = (eval(t0 - h)?, eval(t0 - 2.0 * h)?);
                (0..m)
                    .map(|c| (3.0 * f0[c] - 4.0 * a[c] + b[c]) / (2.0 * h))
                    .collect()
            }
        })
    };

    let coarse = estimate(h)?;
    let out = if cfg.richardson {
        let fine = estimate(0.5 * h)?;
        let refined: Vec<f64> = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| (4.0 * f - c) / 3.0)
            .collect();
        let scale = refined
            .iter()
            .map(|v| v.abs())
            .chain(f0.iter().map(|v| v.abs() / char_len))
            .fold(f64::MIN_POSITIVE, f64::max);
        let gap = coarse
            .iter()
            .zip(&fine)
            .fold(0.0, |g: f64, (c, f)| g.max((c - f).abs()));
        if gap > cfg.level_tol * scale + cfg.level_floor {
            return Err(GeomError::numerical(format!(
                "Richardson levels disagree by {gap:.3e} at scale {scale:.3e}"
            )));
        }
        refined
    } else {
        coarse
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::numerical("non-finite finite-difference estimate"));
    }
    Ok(out)
}

fn shifted(theta: &[f64], i: usize, t: f64) -> Vec<f64> {
    let mut p = theta.to_vec();
    p[i] = t;
    p
}

/// ∂_a F for a flattened tensor field F.
pub fn fd_field_derivative<F>(
    field: F,
    theta: &[f64],
    direction: usize,
    chart: &ChartSpec,
    cfg: &DiffConfig,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let a = direction;
    derivative_1d(
        |t| field(&shifted(theta, a, t)),
        theta[a],
        cfg.step(theta, a),
        (chart.lower[a], chart.upper[a]),
        cfg.scale_of(theta, a),
        cfg,
    )
}

/// Jacobian of a vector field; column `i` is ∂_i F.
pub fn fd_jacobian<F>(field: F, theta: &[f64], chart: &ChartSpec, cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = theta.len();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        cols.push(fd_field_derivative(&field, theta, i, chart, cfg)?);
    }
    let m = cols[0].len();
    Ok(DMatrix::from_fn(m, n, |r, c| cols[c][r]))
}

pub fn fd_gradient<F>(f: F, theta: &[f64], chart: &ChartSpec, cfg: &DiffConfig) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let j = fd_jacobian(|p| Ok(vec![f(p)?]), theta, chart, cfg)?;
    Ok(DVector::from_iterator(theta.len(), j.row(0).iter().copied()))
}

/// Symmetrised Jacobian of a gradient field.
pub fn fd_hessian_from_gradient<G>(
    grad: G,
    theta: &[f64],
    chart: &ChartSpec,
    cfg: &DiffConfig,
) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let j = fd_jacobian(|p| Ok(grad(p)?.as_slice().to_vec()), theta, chart, cfg)?;
    symmetrise_checked(j)
}

/// Hessian by nested differences of the scalar field.
pub fn fd_hessian<F>(f: F, theta: &[f64], chart: &ChartSpec, cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    fd_hessian_from_gradient(|p| fd_gradient(&f, p, chart, cfg), theta, chart, cfg)
}

/// (H + Hᵀ)/2, failing when the raw asymmetry exceeds 1e-3 of ‖H‖.
pub fn symmetrise_checked(h: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let norm = h.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let asym = (&h - h.transpose()).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if asym > 1e-3 * norm && asym > 1e-8 {
        return Err(GeomError::numerical(format!(
            "finite-difference Hessian asymmetric: {asym:.3e} against norm {norm:.3e}"
        )));
    }
    Ok((&h + h.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> ChartSpec {
        ChartSpec::new(
            "plane",
            &["x", "y"],
            &[(f64::NEG_INFINITY, f64::INFINITY); 2],
            &[(-1.0, 1.0); 2],
        )
    }

    #[test]
    fn one_sided_near_bound() {
        let c = ChartSpec::new("half", &["s"], &[(0.0, f64::INFINITY)], &[(0.5, 2.0)]);
        let guarded = |p: &[f64]| {
            if p[0] <= 0.0 {
                Err(GeomError::numerical("left the domain"))
            } else {
                Ok(p[0].sin())
            }
        };
        let g = fd_gradient(guarded, &[1.5e-4], &c, &DiffConfig::default()).unwrap();
        assert!((g[0] - 1.5e-4_f64.cos()).abs() < 1e-9);
        let g = fd_gradient(guarded, &[1e-9], &c, &DiffConfig::default()).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn discontinuity_is_reported() {
        let r = fd_gradient(
            |p| Ok(if p[0] > 0.0 { 1.0 } else { 0.0 }),
            &[1e-6, 0.0],
            &plane(),
            &DiffConfig::default(),
        );
        assert!(matches!(r, Err(GeomError::NumericalFailure(_))));
    }

    #[test]
    fn asymmetric_jacobian_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(symmetrise_checked(m).is_err());
    }
}
