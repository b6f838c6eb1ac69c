//! Normal distributions p_{μ,σ} under the KL divergence and under a
//! sum-of-squares moment divergence.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};

use crate::chart::ChartSpec;
use crate::dataset::{DataSet, Distribution, Statistic};
use crate::error::{GeomError, Result};
use crate::model::{ClosedForms, DivergenceKind, ModelDefinition, ProbeCurve, ProbeFamily, StatisticSpec};
use crate::tensor::Connection;

fn chart() -> ChartSpec {
    ChartSpec::new(
        "mu-sigma",
        &["mu", "sigma"],
        &[(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)],
        &[(-2.0, 2.0), (0.3, 3.0)],
    )
}

/// Gaussian, symmetric two-point and uniform laws sharing the first two moments.
fn gaussian_fibre(theta: &[f64], k: usize) -> Vec<DataSet> {
    let (mu, sigma) = (theta[0], theta[1]);
    let r3 = 3f64.sqrt() * sigma;
    [
        Distribution::Gaussian { mean: mu, sd: sigma },
        Distribution::TwoPoint {
            center: mu,
            half_width: sigma,
        },
        Distribution::Uniform {
            lo: mu - r3,
            hi: mu + r3,
        },
    ]
    .into_iter()
    .take(k)
    .map(DataSet::analytic)
    .collect()
}

/// Moment data set with the entropy of the Gaussian of the same variance.
fn moment_point(m1: f64, m2: f64) -> DataSet {
    let var = m2 - m1 * m1;
    let mut values = vec![(Statistic::Mean, m1), (Statistic::SecondMoment, m2)];
    if var > 0.0 {
        values.push((Statistic::Entropy, 0.5 * (2.0 * PI * E * var).ln()));
    }
    DataSet::moments(&values)
}

/// Curves that move one parameter of the Gaussian while keeping the other:
/// (m1 + ε, m2 + 2με) and (m1, m2 + 2σε + ε²).
fn parameter_curves(theta: &[f64]) -> Vec<ProbeCurve> {
    let (mu, s) = (theta[0], theta[1]);
    let (m1, m2) = (mu, mu * mu + s * s);
    vec![
        ProbeCurve::new("shift mean", s, move |e| Ok(moment_point(m1 + e, m2 + 2.0 * mu * e))),
        ProbeCurve::new("widen", s, move |e| Ok(moment_point(m1, m2 + 2.0 * s * e + e * e))),
    ]
}

/// Curves that move one raw moment at a time.
fn raw_moment_curves(theta: &[f64]) -> Vec<ProbeCurve> {
    let (mu, s) = (theta[0], theta[1]);
    let (m1, m2) = (mu, mu * mu + s * s);
    let scale = m2.abs().max(s);
    vec![
        ProbeCurve::new("first moment", s, move |e| Ok(moment_point(m1 + e, m2))),
        ProbeCurve::new("second moment", scale, move |e| Ok(moment_point(m1, m2 + e))),
    ]
}

fn moments_fit(x: &DataSet) -> Result<Vec<f64>> {
    let m1 = x.get(Statistic::Mean)?;
    let var = x.get(Statistic::SecondMoment)? - m1 * m1;
    if !(var > 0.0) {
        return Err(GeomError::DataDomain(format!("variance {var} is not positive")));
    }
    Ok(vec![m1, var.sqrt()])
}

pub struct GaussianKl {
    chart: ChartSpec,
}

impl Default for GaussianKl {
    fn default() -> Self {
        Self { chart: chart() }
    }
}

impl GaussianKl {
    fn q(x: &DataSet, mu: f64) -> Result<(f64, f64)> {
        let m1 = x.get(Statistic::Mean)?;
        let m2 = x.get(Statistic::SecondMoment)?;
        Ok((m1, m2 - 2.0 * mu * m1 + mu * mu))
    }
}

impl ModelDefinition for GaussianKl {
    fn name(&self) -> &str {
        "gaussian-kl"
    }
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        vec![
            StatisticSpec::plain(Statistic::Mean),
            StatisticSpec::plain(Statistic::SecondMoment),
            StatisticSpec::offset(Statistic::Entropy),
        ]
    }
    fn kind(&self) -> DivergenceKind {
        DivergenceKind::KullbackLeibler
    }

    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let (_, q) = Self::q(x, mu)?;
        Ok(-x.get(Statistic::Entropy)? + 0.5 * (2.0 * PI * s * s).ln() + q / (2.0 * s * s))
    }

    fn analytic_gradient(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DVector<f64>>> {
        let (mu, s) = (theta[0], theta[1]);
        Some(Self::q(x, mu).map(|(m1, q)| {
            DVector::from_vec(vec![(mu - m1) / (s * s), 1.0 / s - q / (s * s * s)])
        }))
    }

    fn analytic_hessian(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let (mu, s) = (theta[0], theta[1]);
        Some(Self::q(x, mu).map(|(m1, q)| {
            let s2 = s * s;
            let off = -2.0 * (mu - m1) / (s2 * s);
            DMatrix::from_row_slice(2, 2, &[1.0 / s2, off, off, -1.0 / s2 + 3.0 * q / (s2 * s2)])
        }))
    }

    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.chart.check(theta)?;
        Ok(gaussian_fibre(theta, k))
    }

    fn probes(&self, theta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        self.chart.check(theta)?;
        Ok(match family {
            ProbeFamily::Primary => parameter_curves(theta),
            ProbeFamily::Secondary => raw_moment_curves(theta),
        })
    }

    fn closed_form_fit(&self, x: &DataSet) -> Result<Vec<f64>> {
        moments_fit(x)
    }

    fn oracle(&self) -> Option<&dyn ClosedForms> {
        Some(self)
    }

    fn default_grid(&self) -> Vec<Vec<f64>> {
        crate::chart::grid(&[(-1.0, 1.0, 5), (0.5, 3.0, 5)])
    }
}

impl ClosedForms for GaussianKl {
    fn metric(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let s2 = theta[1] * theta[1];
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / s2, 2.0 / s2])))
    }
    fn connection(&self, theta: &[f64]) -> Option<Connection> {
        let s = theta[1];
        let mut w = Connection::zeros(2);
        w.set(0, 0, 1, -2.0 / s);
        w.set(0, 1, 0, -2.0 / s);
        w.set(1, 1, 1, -3.0 / s);
        Some(w)
    }
    fn affine_coordinates(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let (mu, s) = (theta[0], theta[1]);
        Some(vec![0.5 / (s * s), -mu / (s * s)])
    }
    fn massieu(&self, theta: &[f64]) -> Option<f64> {
        let (mu, s) = (theta[0], theta[1]);
        Some(mu * mu / (2.0 * s * s) + 0.5 * (2.0 * PI * s * s).ln())
    }
}

/// D′ = (μ − 𝔼[x])²/(2μ₀²) + (μ² + σ² − 𝔼[x²])²/(4σ₀⁴).
pub struct GaussianSumSq {
    chart: ChartSpec,
    mu0: f64,
    sigma0: f64,
}

impl GaussianSumSq {
    pub fn new(mu0: f64, sigma0: f64) -> Result<Self> {
        if !(mu0 > 0.0 && mu0.is_finite() && sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(GeomError::Config(format!(
                "gaussian-sumsq needs mu0 > 0 and sigma0 > 0, got {mu0}, {sigma0}"
            )));
        }
        Ok(Self {
            chart: chart(),
            mu0,
            sigma0,
        })
    }

    fn moments(x: &DataSet, theta: &[f64]) -> Result<(f64, f64)> {
        let (mu, s) = (theta[0], theta[1]);
        let m1 = x.get(Statistic::Mean)?;
        let m2 = x.get(Statistic::SecondMoment)?;
        Ok((m1, mu * mu + s * s - m2))
    }
}

impl Default for GaussianSumSq {
    fn default() -> Self {
        Self::new(1.0, 1.0).expect("unit scales are valid")
    }
}

impl ModelDefinition for GaussianSumSq {
    fn name(&self) -> &str {
        "gaussian-sumsq"
    }
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        vec![
            StatisticSpec::plain(Statistic::Mean),
            StatisticSpec::plain(Statistic::SecondMoment),
        ]
    }
    fn kind(&self) -> DivergenceKind {
        DivergenceKind::Other
    }

    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64> {
        let (m1, s) = Self::moments(x, theta)?;
        let a = self.mu0 * self.mu0;
        let b = self.sigma0.powi(4);
        Ok((theta[0] - m1).powi(2) / (2.0 * a) + s * s / (4.0 * b))
    }

    fn analytic_gradient(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DVector<f64>>> {
        let (mu, sig) = (theta[0], theta[1]);
        let a = self.mu0 * self.mu0;
        let b = self.sigma0.powi(4);
        Some(Self::moments(x, theta).map(|(m1, s)| {
            DVector::from_vec(vec![(mu - m1) / a + s * mu / b, s * sig / b])
        }))
    }

    fn analytic_hessian(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let (mu, sig) = (theta[0], theta[1]);
        let a = self.mu0 * self.mu0;
        let b = self.sigma0.powi(4);
        Some(Self::moments(x, theta).map(|(_, s)| {
            let off = 2.0 * mu * sig / b;
            DMatrix::from_row_slice(
                2,
                2,
                &[1.0 / a + (2.0 * mu * mu + s) / b, off, off, (2.0 * sig * sig + s) / b],
            )
        }))
    }

    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.chart.check(theta)?;
        Ok(gaussian_fibre(theta, k))
    }

    fn probes(&self, theta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        self.chart.check(theta)?;
        Ok(match family {
            ProbeFamily::Primary => raw_moment_curves(theta),
            ProbeFamily::Secondary => parameter_curves(theta),
        })
    }

    fn closed_form_fit(&self, x: &DataSet) -> Result<Vec<f64>> {
        moments_fit(x)
    }

    fn oracle(&self) -> Option<&dyn ClosedForms> {
        Some(self)
    }

    fn default_grid(&self) -> Vec<Vec<f64>> {
        crate::chart::grid(&[(-1.0, 1.0, 5), (0.5, 3.0, 5)])
    }
}

impl ClosedForms for GaussianSumSq {
    fn metric(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let (mu, s) = (theta[0], theta[1]);
        let a = self.mu0 * self.mu0;
        let b = self.sigma0.powi(4);
        let off = 2.0 * mu * s / b;
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[1.0 / a + 2.0 * mu * mu / b, off, off, 2.0 * s * s / b],
        ))
    }
    fn connection(&self, theta: &[f64]) -> Option<Connection> {
        let s = theta[1];
        let mut w = Connection::zeros(2);
        w.set(1, 0, 0, 1.0 / s);
        w.set(1, 1, 1, 1.0 / s);
        Some(w)
    }
    fn affine_coordinates(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let (mu, s) = (theta[0], theta[1]);
        Some(vec![mu, mu * mu + s * s])
    }
    fn massieu(&self, theta: &[f64]) -> Option<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let e2 = mu * mu + s * s;
        Some(mu * mu / (2.0 * self.mu0 * self.mu0) + e2 * e2 / (4.0 * self.sigma0.powi(4)))
    }
}
