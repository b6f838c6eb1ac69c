//! Straight-line fits y = a·x + b to couples (x_j, y_j).

use nalgebra::{DMatrix, DVector};

use crate::chart::ChartSpec;
use crate::dataset::{DataSet, Statistic};
use crate::error::{GeomError, Result};
use crate::model::{ClosedForms, DivergenceKind, ModelDefinition, ProbeCurve, ProbeFamily, StatisticSpec};
use crate::tensor::Connection;

const SUMS: [Statistic; 6] = [
    Statistic::Count,
    Statistic::SumX,
    Statistic::SumY,
    Statistic::SumXx,
    Statistic::SumXy,
    Statistic::SumYy,
];

#[derive(Clone, Copy, Debug)]
struct Sums {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
}

impl Sums {
    fn of(x: &DataSet) -> Result<Self> {
        Ok(Self {
            n: x.get(Statistic::Count)?,
            sx: x.get(Statistic::SumX)?,
            sy: x.get(Statistic::SumY)?,
            sxx: x.get(Statistic::SumXx)?,
            sxy: x.get(Statistic::SumXy)?,
            syy: x.get(Statistic::SumYy)?,
        })
    }

    /// 2(N·Σx² − (Σx)²); must be positive.
    fn p(&self) -> Result<f64> {
        let p = 2.0 * (self.n * self.sxx - self.sx * self.sx);
        if p > 0.0 {
            Ok(p)
        } else {
            Err(GeomError::DataDomain(
                "regression sample needs N*sum(x^2) - (sum x)^2 > 0".into(),
            ))
        }
    }

    fn pxy(&self) -> f64 {
        2.0 * (self.n * self.sxy - self.sx * self.sy)
    }

    fn cb(&self) -> f64 {
        2.0 * (self.sxx * self.sy - self.sx * self.sxy)
    }

    fn least_squares(&self) -> Result<(f64, f64)> {
        let p = self.p()?;
        Ok((self.pxy() / p, self.cb() / p))
    }
}

fn chart() -> ChartSpec {
    ChartSpec::new(
        "a-b",
        &["a", "b"],
        &[(f64::NEG_INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)],
        &[(-2.0, 2.0), (-2.0, 2.0)],
    )
}

const X_SETS: [&[f64]; 3] = [&[-1.0, 0.0, 1.0, 2.0], &[0.0, 0.5, 3.0], &[-2.0, 1.0, 1.5, 4.0, 5.0]];

/// Exact lines on three x-sets, then a noisy sample whose residual is
/// orthogonal to (x, 1).
fn line_fibre(theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
    let (a, b) = (theta[0], theta[1]);
    let mut out = Vec::new();
    for xs in X_SETS {
        out.push(DataSet::regression(xs.iter().map(|&x| (x, a * x + b)).collect())?);
    }
    let residual = [1.0, -1.0, -1.0, 1.0];
    out.push(DataSet::regression(
        (0..4).map(|i| (i as f64, a * i as f64 + b + residual[i])).collect(),
    )?);
    out.truncate(k);
    Ok(out)
}

fn sum_probes(member: &DataSet, family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
    let base: Vec<(Statistic, f64)> = SUMS.iter().map(|&s| Ok((s, member.get(s)?))).collect::<Result<_>>()?;
    let shifted = move |dxy: f64, dy: f64| {
        let values: Vec<(Statistic, f64)> = base
            .iter()
            .map(|&(s, v)| match s {
                Statistic::SumXy => (s, v + dxy),
                Statistic::SumY => (s, v + dy),
                _ => (s, v),
            })
            .collect();
        DataSet::moments(&values)
    };
    let f = std::sync::Arc::new(shifted);
    let (f1, f2) = (f.clone(), f);
    Ok(match family {
        ProbeFamily::Primary => vec![
            ProbeCurve::new("sum x*y", 1.0, move |e| Ok(f1(e, 0.0))),
            ProbeCurve::new("sum y", 1.0, move |e| Ok(f2(0.0, e))),
        ],
        ProbeFamily::Secondary => vec![
            ProbeCurve::new("sum x*y + sum y", 1.0, move |e| Ok(f1(e, e))),
            ProbeCurve::new("sum x*y - sum y", 1.0, move |e| Ok(f2(e, -e))),
        ],
    })
}

fn first_member(theta: &[f64]) -> Result<DataSet> {
    Ok(line_fibre(theta, 1)?.remove(0))
}

/// D(S‖f_{a,b}) = ½ Σ (y_j − a·x_j − b)².
pub struct RegressionLs {
    chart: ChartSpec,
}

impl Default for RegressionLs {
    fn default() -> Self {
        Self { chart: chart() }
    }
}

impl ModelDefinition for RegressionLs {
    fn name(&self) -> &str {
        "regression-ls"
    }
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        SUMS.iter().map(|&s| StatisticSpec::plain(s)).collect()
    }
    fn kind(&self) -> DivergenceKind {
        DivergenceKind::Other
    }

    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64> {
        let (a, b) = (theta[0], theta[1]);
        let s = Sums::of(x)?;
        Ok(0.5
            * (s.syy - 2.0 * a * s.sxy - 2.0 * b * s.sy + a * a * s.sxx + 2.0 * a * b * s.sx + b * b * s.n))
    }

    fn analytic_gradient(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DVector<f64>>> {
        let (a, b) = (theta[0], theta[1]);
        Some(Sums::of(x).map(|s| {
            DVector::from_vec(vec![-s.sxy + a * s.sxx + b * s.sx, -s.sy + a * s.sx + b * s.n])
        }))
    }

    fn analytic_hessian(&self, x: &DataSet, _theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        Some(Sums::of(x).map(|s| DMatrix::from_row_slice(2, 2, &[s.sxx, s.sx, s.sx, s.n])))
    }

    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.chart.check(theta)?;
        line_fibre(theta, k)
    }

    fn probes(&self, theta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        sum_probes(&first_member(theta)?, family)
    }

    fn closed_form_fit(&self, x: &DataSet) -> Result<Vec<f64>> {
        let (a, b) = Sums::of(x)?.least_squares()?;
        Ok(vec![a, b])
    }

    fn varying_terms(&self, x: &DataSet, _theta: &[f64]) -> Result<Vec<(String, f64)>> {
        let s = Sums::of(x)?;
        Ok(vec![("sum x^2".into(), s.sxx), ("N".into(), s.n), ("sum x".into(), s.sx)])
    }
}

/// D_λ = (λ²Q₁ + Q₂)/(2P), built from the squared line-fit residual
/// identities so that its Hessian is diag(λ², 1) for every sample.
pub struct RegressionDLambda {
    chart: ChartSpec,
    lambda: f64,
}

impl RegressionDLambda {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(GeomError::Config(format!("regression-dlambda needs lambda > 0, got {lambda}")));
        }
        Ok(Self { chart: chart(), lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for RegressionDLambda {
    fn default() -> Self {
        Self::new(1.0).expect("lambda = 1 is valid")
    }
}

impl ModelDefinition for RegressionDLambda {
    fn name(&self) -> &str {
        "regression-dlambda"
    }
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        SUMS.iter().map(|&s| StatisticSpec::plain(s)).collect()
    }
    fn kind(&self) -> DivergenceKind {
        DivergenceKind::Other
    }

    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64> {
        let (a, b) = (theta[0], theta[1]);
        let s = Sums::of(x)?;
        let p = s.p()?;
        let q1 = 2.0 * (s.n * s.syy - s.sy * s.sy) - 2.0 * a * s.pxy() + a * a * p;
        let c = 2.0 * (s.sxx * s.syy - s.sxy * s.sxy);
        let q2 = c - 2.0 * b * s.cb() + b * b * p;
        let l2 = self.lambda * self.lambda;
        Ok((l2 * q1 + q2) / (2.0 * p))
    }

    fn analytic_gradient(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DVector<f64>>> {
        let (a, b) = (theta[0], theta[1]);
        let l2 = self.lambda * self.lambda;
        Some((|| {
            let s = Sums::of(x)?;
            let p = s.p()?;
            Ok(DVector::from_vec(vec![l2 * (a * p - s.pxy()) / p, (b * p - s.cb()) / p]))
        })())
    }

    fn analytic_hessian(&self, x: &DataSet, _theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let l2 = self.lambda * self.lambda;
        Some((|| {
            Sums::of(x)?.p()?;
            Ok(DMatrix::from_diagonal(&DVector::from_vec(vec![l2, 1.0])))
        })())
    }

    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.chart.check(theta)?;
        line_fibre(theta, k)
    }

    fn probes(&self, theta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        sum_probes(&first_member(theta)?, family)
    }

    fn closed_form_fit(&self, x: &DataSet) -> Result<Vec<f64>> {
        let (a, b) = Sums::of(x)?.least_squares()?;
        Ok(vec![a, b])
    }

    fn oracle(&self) -> Option<&dyn ClosedForms> {
        Some(self)
    }
}

impl ClosedForms for RegressionDLambda {
    fn metric(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![self.lambda * self.lambda, 1.0])))
    }
    fn connection(&self, _theta: &[f64]) -> Option<Connection> {
        Some(Connection::zeros(2))
    }
    fn affine_coordinates(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(theta.to_vec())
    }
    fn massieu(&self, theta: &[f64]) -> Option<f64> {
        let (a, b) = (theta[0], theta[1]);
        Some(0.5 * (self.lambda * self.lambda * a * a + b * b))
    }
}
