//! The model map: θ* = argmin_θ D(x‖m_θ).

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::chart::ParameterPoint;
use crate::dataset::DataSet;
use crate::error::{GeomError, NoConvergenceReason, Result};
use crate::model::{divergence_gradient, divergence_hessian, evaluate_divergence, Derivatives, ModelDefinition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Max-norm of the gradient at which the iteration stops.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    /// Iterates are kept this far inside finite chart bounds.
    pub margin: f64,
    pub derivatives: Derivatives,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-9,
            armijo_c: 1e-4,
            shrink: 0.5,
            margin: 1e-9,
            derivatives: Derivatives::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub theta_star: ParameterPoint,
    pub divergence_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton with Armijo backtracking, falling back to steepest descent
/// when the Hessian is not positive definite.
pub fn fit(
    model: &(impl ModelDefinition + ?Sized),
    x: &DataSet,
    theta0: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let chart = model.chart();
    chart.check(theta0)?;
    let how = &opts.derivatives;
    let mut theta = theta0.to_vec();
    let mut f = evaluate_divergence(model, x, &theta)?;
    let mut g = divergence_gradient(model, x, &theta, how)?;

    for iter in 0..=opts.max_iter {
        let gnorm = max_norm(&g);
        let h = divergence_hessian(model, x, &theta, how)?;
        let chol = Cholesky::new(h);
        if gnorm <= opts.grad_tol {
            if chol.is_none() {
                return Err(GeomError::NoConvergence {
                    iterations: iter,
                    reason: NoConvergenceReason::SaddleOrMax,
                    gradient_norm: gnorm,
                });
            }
            return Ok(FitResult {
                theta_star: ParameterPoint::new(&chart.id, theta),
                divergence_value: f,
                gradient_norm: gnorm,
                iterations: iter,
                converged: true,
            });
        }
        if iter == opts.max_iter {
            break;
        }

        let newton = chol
            .as_ref()
            .map(|c| -c.solve(&g))
            .filter(|p| p.dot(&g) < 0.0 && p.iter().all(|v| v.is_finite()));
        let mut accepted = None;
        for p in newton.iter().cloned().chain(std::iter::once(-g.clone())) {
            accepted = line_search(model, x, &theta, f, &g, &p, opts);
            if accepted.is_some() {
                break;
            }
        }
        // Near the minimum f stops resolving the decrease; a full Newton step
        // is then taken when it shrinks the gradient.
        if accepted.is_none() {
            if let Some(p) = &newton {
                if -0.5 * p.dot(&g) <= 64.0 * f64::EPSILON * f.abs().max(1.0) {
                    let trial: Vec<f64> = theta.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
                    let trial = chart.project(&trial, opts.margin.max(1e-12));
                    if let (Ok(ft), Ok(gt)) = (
                        evaluate_divergence(model, x, &trial),
                        divergence_gradient(model, x, &trial, how),
                    ) {
                        if max_norm(&gt) < gnorm {
                            accepted = Some((trial, ft));
                        }
                    }
                }
            }
        }
        let Some((next, fnext)) = accepted.filter(|(next, _)| *next != theta) else {
            return Err(GeomError::NoConvergence {
                iterations: iter,
                reason: NoConvergenceReason::LineSearch,
                gradient_norm: gnorm,
            });
        };
        theta = next;
        f = fnext;
        g = divergence_gradient(model, x, &theta, how)?;
    }
    Err(GeomError::NoConvergence {
        iterations: opts.max_iter,
        reason: NoConvergenceReason::MaxIterations,
        gradient_norm: max_norm(&g),
    })
}

/// Projected Armijo backtracking along `p`; the sufficient-decrease test uses
/// the step actually taken after projection into the chart.
fn line_search(
    model: &(impl ModelDefinition + ?Sized),
    x: &DataSet,
    theta: &[f64],
    f: f64,
    g: &DVector<f64>,
    p: &DVector<f64>,
    opts: &FitOptions,
) -> Option<(Vec<f64>, f64)> {
    let chart = model.chart();
    let mut t = 1.0;
    for _ in 0..80 {
        let trial: Vec<f64> = theta.iter().zip(p.iter()).map(|(a, b)| a + t * b).collect();
        let trial = chart.project(&trial, opts.margin.max(1e-12));
        let slope: f64 = trial.iter().zip(theta).zip(g.iter()).map(|((a, b), gi)| (a - b) * gi).sum();
        if slope < 0.0 {
            if let Ok(ft) = evaluate_divergence(model, x, &trial) {
                // Allow for rounding in f once the decrease is at machine precision.
                if ft <= f + opts.armijo_c * slope + 4.0 * f64::EPSILON * f.abs() {
                    return Some((trial, ft));
                }
            }
        }
        t *= opts.shrink;
    }
    None
}

/// Exact fit from the model's closed form, when it has one.
pub fn closed_form_fit(model: &(impl ModelDefinition + ?Sized), x: &DataSet) -> Result<ParameterPoint> {
    let theta = model.closed_form_fit(x)?;
    model.chart().point(&theta)
}
