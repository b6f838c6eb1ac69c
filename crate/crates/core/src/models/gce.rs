//! Ideal bosons in the grand canonical ensemble on a finite spectrum ε_j.
//! Data are occupation numbers n_j; the model point is (β, μ).

use nalgebra::{DMatrix, DVector};

use crate::chart::ChartSpec;
use crate::dataset::{DataSet, Statistic};
use crate::error::{GeomError, Result};
use crate::model::{ClosedForms, DivergenceKind, ModelDefinition, ProbeCurve, ProbeFamily, StatisticSpec};
use crate::tensor::Connection;

pub struct GrandCanonical {
    chart: ChartSpec,
    levels: Vec<f64>,
    min_level: f64,
    max_level: f64,
}

/// Per-level x = β(ε − μ), Bose occupation f = 1/(eˣ − 1) and q = f(1 + f).
struct Level {
    d: f64,
    f: f64,
    q: f64,
}

impl GrandCanonical {
    pub fn new(levels: &[f64]) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|e| !e.is_finite()) {
            return Err(GeomError::Config("gce needs a non-empty list of finite levels".into()));
        }
        let min_level = levels.iter().copied().fold(f64::INFINITY, f64::min);
        let max_level = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max_level - min_level <= 0.0 {
            return Err(GeomError::Config(
                "gce needs at least two distinct levels for a two-parameter chart".into(),
            ));
        }
        let chart = ChartSpec::new(
            "beta-mu",
            &["beta", "mu"],
            &[(0.0, f64::INFINITY), (f64::NEG_INFINITY, min_level)],
            &[(0.5, 3.0), (min_level - 3.0, min_level - 0.5)],
        );
        Ok(Self {
            chart,
            levels: levels.to_vec(),
            min_level,
            max_level,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn states(&self, theta: &[f64]) -> Vec<Level> {
        let (beta, mu) = (theta[0], theta[1]);
        self.levels
            .iter()
            .map(|&e| {
                let d = e - mu;
                let f = 1.0 / (beta * d).exp_m1();
                Level { d, f, q: f * (1.0 + f) }
            })
            .collect()
    }

    /// ln 𝒵 = −Σ ln(1 − e^{−β(ε−μ)}).
    pub fn ln_partition(&self, theta: &[f64]) -> f64 {
        let (beta, mu) = (theta[0], theta[1]);
        -self
            .levels
            .iter()
            .map(|&e| (-(-beta * (e - mu)).exp()).ln_1p())
            .sum::<f64>()
    }

    /// Mean occupations at θ.
    pub fn occupations(&self, theta: &[f64]) -> Vec<f64> {
        self.states(theta).iter().map(|s| s.f).collect()
    }

    fn totals(x: &DataSet) -> Result<(f64, f64)> {
        Ok((x.get(Statistic::OccupationTotal)?, x.get(Statistic::EnergyTotal)?))
    }

    fn metric_of(&self, theta: &[f64]) -> DMatrix<f64> {
        let beta = theta[0];
        let st = self.states(theta);
        let sdq: f64 = st.iter().map(|s| s.d * s.q).sum();
        let sd2q: f64 = st.iter().map(|s| s.d * s.d * s.q).sum();
        let sq: f64 = st.iter().map(|s| s.q).sum();
        DMatrix::from_row_slice(2, 2, &[sd2q, -beta * sdq, -beta * sdq, beta * beta * sq])
    }
}

impl ModelDefinition for GrandCanonical {
    fn name(&self) -> &str {
        "gce"
    }
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        vec![
            StatisticSpec::plain(Statistic::OccupationTotal),
            StatisticSpec::plain(Statistic::EnergyTotal),
            StatisticSpec::offset(Statistic::Entropy),
        ]
    }
    fn kind(&self) -> DivergenceKind {
        DivergenceKind::KullbackLeibler
    }

    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64> {
        let (beta, mu) = (theta[0], theta[1]);
        let (n, e) = Self::totals(x)?;
        Ok(-x.get(Statistic::Entropy)? + self.ln_partition(theta) + beta * e - beta * mu * n)
    }

    fn analytic_gradient(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DVector<f64>>> {
        let (beta, mu) = (theta[0], theta[1]);
        Some(Self::totals(x).map(|(n, e)| {
            let st = self.states(theta);
            let sdf: f64 = st.iter().map(|s| s.d * s.f).sum();
            let sf: f64 = st.iter().map(|s| s.f).sum();
            DVector::from_vec(vec![-sdf + e - mu * n, beta * sf - beta * n])
        }))
    }

    fn analytic_hessian(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let beta = theta[0];
        Some(Self::totals(x).map(|(n, _)| {
            let st = self.states(theta);
            let sf: f64 = st.iter().map(|s| s.f).sum();
            let sdq: f64 = st.iter().map(|s| s.d * s.q).sum();
            let sd2q: f64 = st.iter().map(|s| s.d * s.d * s.q).sum();
            let sq: f64 = st.iter().map(|s| s.q).sum();
            let off = sf - n - beta * sdq;
            DMatrix::from_row_slice(2, 2, &[sd2q, off, off, beta * beta * sq])
        }))
    }

    /// Mean occupations, their totals as moments, and a reshuffle of the
    /// occupations that keeps both totals.
    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.chart.check(theta)?;
        let f = self.occupations(theta);
        let n: f64 = f.iter().sum();
        let e: f64 = f.iter().zip(&self.levels).map(|(f, e)| f * e).sum();
        let points: Vec<Vec<f64>> = self.levels.iter().map(|&e| vec![e]).collect();
        let mut out = vec![
            DataSet::empirical(points.clone(), f.clone())?,
            DataSet::moments(&[(Statistic::OccupationTotal, n), (Statistic::EnergyTotal, e)]),
        ];
        if self.levels.len() >= 3 {
            // v ⟂ (1, ε) on the first three levels.
            let (e1, e2, e3) = (self.levels[0], self.levels[1], self.levels[2]);
            let v = [e3 - e2, e1 - e3, e2 - e1];
            let vmax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let fmin = f[..3].iter().copied().fold(f64::INFINITY, f64::min);
            let t = 0.5 * fmin / vmax;
            let mut w = f.clone();
            for j in 0..3 {
                w[j] += t * v[j];
            }
            out.push(DataSet::empirical(points, w)?);
        } else {
            let mut pts = points;
            let mut w = f;
            pts.push(pts[0].clone());
            w[0] *= 0.5;
            w.push(w[0]);
            out.push(DataSet::empirical(pts, w)?);
        }
        out.truncate(k);
        Ok(out)
    }

    fn probes(&self, theta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        self.chart.check(theta)?;
        let mu = theta[1];
        let f = self.occupations(theta);
        let n: f64 = f.iter().sum();
        let e: f64 = f.iter().zip(&self.levels).map(|(f, e)| f * e).sum();
        let scale = n.max(1.0);
        let at = move |dn: f64, de: f64| {
            Ok(DataSet::moments(&[
                (Statistic::OccupationTotal, n + dn),
                (Statistic::EnergyTotal, e + de),
            ]))
        };
        let (lo, hi) = (self.min_level, self.max_level);
        Ok(match family {
            ProbeFamily::Primary => vec![
                ProbeCurve::new("energy", scale, move |t| at(0.0, t)),
                ProbeCurve::new("particle at mu", scale, move |t| at(t, mu * t)),
            ],
            ProbeFamily::Secondary => vec![
                ProbeCurve::new("particle at lowest level", scale, move |t| at(t, lo * t)),
                ProbeCurve::new("particle at highest level", scale, move |t| at(t, hi * t)),
            ],
        })
    }

    fn oracle(&self) -> Option<&dyn ClosedForms> {
        Some(self)
    }
}

impl ClosedForms for GrandCanonical {
    fn metric(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.metric_of(theta))
    }
    fn connection(&self, theta: &[f64]) -> Option<Connection> {
        let mut w = Connection::zeros(2);
        w.set(1, 0, 1, 1.0 / theta[0]);
        w.set(1, 1, 0, 1.0 / theta[0]);
        Some(w)
    }
    fn affine_coordinates(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(vec![theta[0], -theta[0] * theta[1]])
    }
    fn massieu(&self, theta: &[f64]) -> Option<f64> {
        Some(self.ln_partition(theta))
    }
}

/// Geodesic through θ₀ with velocity v₀: β(t) = At + B and
/// μ(t) = μ₀ + μ̇₀ B²/A (1/B − 1/β(t)), linear in t when A = 0.
pub fn gce_geodesic(theta0: &[f64], v0: &[f64], t: f64) -> [f64; 2] {
    let (b, a) = (theta0[0], v0[0]);
    let beta = a * t + b;
    let mu = if a == 0.0 {
        theta0[1] + v0[1] * t
    } else {
        theta0[1] + v0[1] * b * b / a * (1.0 / b - 1.0 / beta)
    };
    [beta, mu]
}

/// Covariant-constant field through (θ₀, v₀): v^β constant and
/// v^μ = (β₀ v₀^μ + (μ₀ − μ) v^β)/β.
pub fn gce_covariant_field(theta0: &[f64], v0: &[f64], theta: &[f64]) -> [f64; 2] {
    let (b0, m0) = (theta0[0], theta0[1]);
    let (beta, mu) = (theta[0], theta[1]);
    [v0[0], (b0 * v0[1] + (m0 - mu) * v0[0]) / beta]
}
