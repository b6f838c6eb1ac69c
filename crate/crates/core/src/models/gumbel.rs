//! Gumbel laws p_{α,μ}(x) = α exp(−α(x−μ) − e^{−α(x−μ)}) under KL.
//! The fibre contains non-Gumbel members whose Hessians differ, so the
//! model fails Condition 4.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::chart::ChartSpec;
use crate::dataset::{DataSet, Distribution, Statistic};
use crate::error::{GeomError, Result};
use crate::model::{DivergenceKind, ModelDefinition, ProbeCurve, ProbeFamily, StatisticSpec};
use crate::special::GOLDEN;

/// Relative tolerance for a point to count as on the compatible curve.
const CURVE_TOL: f64 = 1e-6;

pub struct Gumbel {
    chart: ChartSpec,
}

impl Default for Gumbel {
    fn default() -> Self {
        Self {
            chart: ChartSpec::new(
                "alpha-mu",
                &["alpha", "mu"],
                &[(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)],
                &[(0.5, 3.5), (-2.0, 2.0)],
            ),
        }
    }
}

struct Tilts {
    mean: f64,
    t0: f64,
    t1: f64,
    t2: f64,
}

impl Gumbel {
    /// αμ on the curve where an exponential law shares the fibre: 2 ln φ.
    pub fn curve_product() -> f64 {
        2.0 * GOLDEN.ln()
    }

    /// The model point paired with Exponential(λ): α = φλ, μ = 2 ln φ / α.
    pub fn point_for_rate(rate: f64) -> [f64; 2] {
        let alpha = GOLDEN * rate;
        [alpha, Self::curve_product() / alpha]
    }

    fn tilts(x: &DataSet, theta: &[f64]) -> Result<Tilts> {
        Ok(Tilts {
            mean: x.get(Statistic::Mean)?,
            t0: x.get_at(Statistic::Tilt0, theta)?,
            t1: x.get_at(Statistic::Tilt1, theta)?,
            t2: x.get_at(Statistic::Tilt2, theta)?,
        })
    }

    fn on_curve(theta: &[f64]) -> bool {
        let target = Self::curve_product();
        (theta[0] * theta[1] - target).abs() <= CURVE_TOL * target
    }
}

impl ModelDefinition for Gumbel {
    fn name(&self) -> &str {
        "gumbel"
    }
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        vec![
            StatisticSpec::plain(Statistic::Mean),
            StatisticSpec::dependent(Statistic::Tilt0),
            StatisticSpec::dependent(Statistic::Tilt1),
            StatisticSpec::dependent(Statistic::Tilt2),
            StatisticSpec::offset(Statistic::Entropy),
        ]
    }
    fn kind(&self) -> DivergenceKind {
        DivergenceKind::KullbackLeibler
    }

    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64> {
        let (a, mu) = (theta[0], theta[1]);
        let mean = x.get(Statistic::Mean)?;
        let t0 = x.get_at(Statistic::Tilt0, theta)?;
        Ok(-x.get(Statistic::Entropy)? - a.ln() + a * (mean - mu) + t0)
    }

    fn analytic_gradient(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DVector<f64>>> {
        let (a, mu) = (theta[0], theta[1]);
        Some(Self::tilts(x, theta).map(|t| DVector::from_vec(vec![-1.0 / a + t.mean - mu - t.t1, -a + a * t.t0])))
    }

    fn analytic_hessian(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let a = theta[0];
        Some(Self::tilts(x, theta).map(|t| {
            let off = -1.0 + t.t0 - a * t.t1;
            DMatrix::from_row_slice(2, 2, &[1.0 / (a * a) + t.t2, off, off, a * a * t.t0])
        }))
    }

    /// Gumbel(α, μ) and Exponential(α/φ); only on the curve αμ = 2 ln φ.
    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.chart.check(theta)?;
        if !Self::on_curve(theta) {
            return Err(GeomError::FibreUnavailable(format!(
                "gumbel fibre members are known only on alpha*mu = 2 ln(golden ratio) = {:.12}; \
                 got alpha*mu = {:.12} at {theta:?}",
                Self::curve_product(),
                theta[0] * theta[1]
            )));
        }
        let mut out = vec![
            DataSet::analytic(Distribution::Gumbel {
                alpha: theta[0],
                mode: theta[1],
            }),
            DataSet::analytic(Distribution::Exponential { rate: theta[0] / GOLDEN }),
        ];
        out.truncate(k);
        Ok(out)
    }

    fn probes(&self, _theta: &[f64], _family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        Err(GeomError::Unsupported(
            "gumbel reads parameter-dependent statistics; no moment-specified probes exist".into(),
        ))
    }

    fn closed_form_fit(&self, x: &DataSet) -> Result<Vec<f64>> {
        match x {
            DataSet::Analytic {
                distribution: Distribution::Gumbel { alpha, mode },
            } => Ok(vec![*alpha, *mode]),
            DataSet::Analytic {
                distribution: Distribution::Exponential { rate },
            } => {
                let a = GOLDEN * rate;
                Ok(vec![a, ((rate + a) / rate).ln() / a])
            }
            _ => Err(GeomError::Unsupported(
                "gumbel closed-form fit covers Gumbel and exponential data only".into(),
            )),
        }
    }

    fn varying_terms(&self, x: &DataSet, theta: &[f64]) -> Result<Vec<(String, f64)>> {
        let a = theta[0];
        Ok(vec![("alpha^2*Tilt2".into(), a * a * x.get_at(Statistic::Tilt2, theta)?)])
    }

    /// Points on the compatible curve for rates λ ∈ [0.5, 2].
    fn default_grid(&self) -> Vec<Vec<f64>> {
        (0..5)
            .map(|i| Self::point_for_rate(0.5 + 1.5 * i as f64 / 4.0).to_vec())
            .collect()
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        Self::point_for_rate(rng.random_range(0.5..2.0)).to_vec()
    }
}
