use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::special::{
    digamma, gamma, trigamma, vmf_log_normaliser, vmf_mean_length, EULER_MASCHERONI,
};

/// Expectation values a divergence may read from its data argument.
///
/// The `Tilt*` statistics are 𝔼[(x−μ)^k e^{−α(x−μ)}] for k = 0, 1, 2 and depend
/// on the model point θ = (α, μ).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    SecondMoment,
    Entropy,
    X1,
    X2,
    X3,
    OccupationTotal,
    EnergyTotal,
    Count,
    SumX,
    SumY,
    SumXx,
    SumXy,
    SumYy,
    Tilt0,
    Tilt1,
    Tilt2,
}

impl Statistic {
    pub fn parameter_dependent(self) -> bool {
        matches!(self, Self::Tilt0 | Self::Tilt1 | Self::Tilt2)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Mean => "E[x]",
            Self::SecondMoment => "E[x^2]",
            Self::Entropy => "S(p)",
            Self::X1 => "E[x1]",
            Self::X2 => "E[x2]",
            Self::X3 => "E[x3]",
            Self::OccupationTotal => "sum n",
            Self::EnergyTotal => "sum n*eps",
            Self::Count => "N",
            Self::SumX => "sum x",
            Self::SumY => "sum y",
            Self::SumXx => "sum x^2",
            Self::SumXy => "sum x*y",
            Self::SumYy => "sum y^2",
            Self::Tilt0 => "E[exp(-a(x-m))]",
            Self::Tilt1 => "E[(x-m)exp(-a(x-m))]",
            Self::Tilt2 => "E[(x-m)^2 exp(-a(x-m))]",
        }
    }

    fn tilt_order(self) -> Option<usize> {
        match self {
            Self::Tilt0 => Some(0),
            Self::Tilt1 => Some(1),
            Self::Tilt2 => Some(2),
            _ => None,
        }
    }
}

/// One expectation request. `theta` must be present exactly for
/// parameter-dependent statistics.
#[derive(Clone, Copy, Debug)]
pub struct StatisticQuery<'a> {
    pub statistic: Statistic,
    pub theta: Option<&'a [f64]>,
}

impl<'a> StatisticQuery<'a> {
    pub fn plain(statistic: Statistic) -> Self {
        Self {
            statistic,
            theta: None,
        }
    }

    pub fn at(statistic: Statistic, theta: &'a [f64]) -> Self {
        Self {
            statistic,
            theta: Some(theta),
        }
    }

    fn tilt_point(&self) -> Result<(f64, f64)> {
        match self.theta {
            Some(t) if t.len() == 2 => Ok((t[0], t[1])),
            _ => Err(GeomError::Config(format!(
                "{} needs a two-coordinate theta (alpha, mu)",
                self.statistic.label()
            ))),
        }
    }
}

/// Distributions whose expectations are known in closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Equal mass at `center ± half_width`.
    TwoPoint { center: f64, half_width: f64 },
    Exponential { rate: f64 },
    Gumbel { alpha: f64, mode: f64 },
    VonMisesFisher { kappa: f64, direction: [f64; 3] },
}

/// A data set, seen only through the expectations it can answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSet {
    Analytic { distribution: Distribution },
    /// Directly specified moment values.
    Moments { values: BTreeMap<Statistic, f64> },
    /// Weighted points. Weights are occupation numbers for [`Statistic::OccupationTotal`]
    /// and normalised for expectations.
    Empirical {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// Couples (x_j, y_j).
    Regression { couples: Vec<(f64, f64)> },
}

impl DataSet {
    pub fn analytic(distribution: Distribution) -> Self {
        Self::Analytic { distribution }
    }

    pub fn moments(values: &[(Statistic, f64)]) -> Self {
        Self::Moments {
            values: values.iter().copied().collect(),
        }
    }

    pub fn empirical(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let ds = Self::Empirical { points, weights };
        ds.validate()?;
        Ok(ds)
    }

    /// Unit-weight one-dimensional sample.
    pub fn sample(values: &[f64]) -> Result<Self> {
        Self::empirical(
            values.iter().map(|&v| vec![v]).collect(),
            vec![1.0; values.len()],
        )
    }

    pub fn regression(couples: Vec<(f64, f64)>) -> Result<Self> {
        let ds = Self::Regression { couples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn provider_kind(&self) -> &'static str {
        match self {
            Self::Analytic { .. } => "analytic",
            Self::Moments { .. } => "moments",
            Self::Empirical { .. } => "empirical",
            Self::Regression { .. } => "regression",
        }
    }

    /// Checks payload invariants; deserialised data sets must pass this before use.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GeomError::DataDomain(m));
        match self {
            Self::Analytic { distribution } => distribution.validate(),
            Self::Moments { values } => {
                if values.values().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    bad("moment values must be finite".into())
                }
            }
            Self::Empirical { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return bad("empirical sample needs one weight per point".into());
                }
                let d = points[0].len();
                if d == 0 || points.iter().any(|p| p.len() != d) {
                    return bad("empirical points must share a positive dimension".into());
                }
                if points.iter().flatten().any(|v| !v.is_finite())
                    || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
                    || weights.iter().sum::<f64>() <= 0.0
                {
                    return bad("empirical weights must be non-negative with positive total".into());
                }
                Ok(())
            }
            Self::Regression { couples } => {
                let n = couples.len() as f64;
                let sx: f64 = couples.iter().map(|c| c.0).sum();
                let sxx: f64 = couples.iter().map(|c| c.0 * c.0).sum();
                let det = n * sxx - sx * sx;
                if couples.iter().any(|c| !c.0.is_finite() || !c.1.is_finite()) {
                    return bad("regression couples must be finite".into());
                }
                if det <= 1e-12 * (n * sxx).max(1.0) {
                    return bad("regression sample needs N*sum(x^2) - (sum x)^2 != 0".into());
                }
                Ok(())
            }
        }
    }

    pub fn expectation(&self, q: StatisticQuery<'_>) -> Result<f64> {
        if q.statistic.parameter_dependent() && q.theta.is_none() {
            return Err(GeomError::Config(format!(
                "{} is parameter dependent and needs theta",
                q.statistic.label()
            )));
        }
        let missing = || GeomError::MissingStatistic {
            statistic: q.statistic.label().to_string(),
            provider: self.provider_kind(),
        };
        match self {
            Self::Analytic { distribution } => distribution.expectation(q).ok_or_else(missing),
            Self::Moments { values } => match values.get(&q.statistic) {
                Some(v) => Ok(*v),
                // The entropy is a θ-independent offset; absent means zero.
                None if q.statistic == Statistic::Entropy => Ok(0.0),
                None => Err(missing()),
            },
            Self::Empirical { points, weights } => {
                empirical_expectation(points, weights, q).ok_or_else(missing)
            }
            Self::Regression { couples } => regression_sum(couples, q.statistic).ok_or_else(missing),
        }
    }

    /// Shorthand for a θ-independent statistic.
    pub fn get(&self, s: Statistic) -> Result<f64> {
        self.expectation(StatisticQuery::plain(s))
    }

    /// Shorthand for a parameter-dependent statistic.
    pub fn get_at(&self, s: Statistic, theta: &[f64]) -> Result<f64> {
        self.expectation(StatisticQuery::at(s, theta))
    }
}

fn empirical_expectation(points: &[Vec<f64>], weights: &[f64], q: StatisticQuery<'_>) -> Option<f64> {
    let total: f64 = weights.iter().sum();
    let mean_of = |f: &dyn Fn(&[f64]) -> f64| {
        points
            .iter()
            .zip(weights)
            .map(|(p, w)| w * f(p))
            .sum::<f64>()
            / total
    };
    let d = points[0].len();
    match q.statistic {
        // Empirical samples carry no entropy; the offset is zero by convention.
        Statistic::Entropy => Some(0.0),
        Statistic::Mean if d == 1 => Some(mean_of(&|p| p[0])),
        Statistic::SecondMoment if d == 1 => Some(mean_of(&|p| p[0] * p[0])),
        Statistic::X1 if d == 3 => Some(mean_of(&|p| p[0])),
        Statistic::X2 if d == 3 => Some(mean_of(&|p| p[1])),
        Statistic::X3 if d == 3 => Some(mean_of(&|p| p[2])),
        Statistic::OccupationTotal if d == 1 => Some(total),
        Statistic::EnergyTotal if d == 1 => {
            Some(points.iter().zip(weights).map(|(p, w)| w * p[0]).sum())
        }
        s if d == 1 && s.tilt_order().is_some() => {
            let (a, m) = q.tilt_point().ok()?;
            let k = s.tilt_order()? as i32;
            Some(mean_of(&|p| {
                let y = p[0] - m;
                y.powi(k) * (-a * y).exp()
            }))
        }
        _ => None,
    }
}

fn regression_sum(couples: &[(f64, f64)], s: Statistic) -> Option<f64> {
    let sum = |f: &dyn Fn(f64, f64) -> f64| couples.iter().map(|&(x, y)| f(x, y)).sum::<f64>();
    match s {
        Statistic::Count => Some(couples.len() as f64),
        Statistic::SumX => Some(sum(&|x, _| x)),
        Statistic::SumY => Some(sum(&|_, y| y)),
        Statistic::SumXx => Some(sum(&|x, _| x * x)),
        Statistic::SumXy => Some(sum(&|x, y| x * y)),
        Statistic::SumYy => Some(sum(&|_, y| y * y)),
        _ => None,
    }
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Gaussian { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Self::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Self::TwoPoint { center, half_width } => {
                center.is_finite() && half_width > 0.0 && half_width.is_finite()
            }
            Self::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Self::Gumbel { alpha, mode } => alpha > 0.0 && alpha.is_finite() && mode.is_finite(),
            Self::VonMisesFisher { kappa, direction } => {
                kappa > 0.0
                    && kappa.is_finite()
                    && direction.iter().all(|d| d.is_finite())
                    && direction.iter().map(|d| d * d).sum::<f64>() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GeomError::DataDomain(format!("invalid distribution parameters {self:?}")))
        }
    }

    /// Closed-form expectation, or `None` when this family cannot answer.
    pub fn expectation(&self, q: StatisticQuery<'_>) -> Option<f64> {
        use Statistic::*;
        let s = q.statistic;
        match *self {
            Self::Gaussian { mean, sd } => match s {
                Mean => Some(mean),
                SecondMoment => Some(mean * mean + sd * sd),
                Entropy => Some(0.5 * (2.0 * PI * E * sd * sd).ln()),
                _ => {
                    let (a, m) = q.tilt_point().ok()?;
                    // y = x − m ~ N(d, sd²); tilting by e^{−a y} shifts the mean to d − a sd².
                    let d = mean - m;
                    let e0 = (-a * d + 0.5 * a * a * sd * sd).exp();
                    let c = d - a * sd * sd;
                    tilt_select(s, e0, c * e0, (sd * sd + c * c) * e0)
                }
            },
            Self::Uniform { lo, hi } => match s {
                Mean => Some(0.5 * (lo + hi)),
                SecondMoment => Some((lo * lo + lo * hi + hi * hi) / 3.0),
                Entropy => Some((hi - lo).ln()),
                _ => {
                    let (a, m) = q.tilt_point().ok()?;
                    let (y0, y1) = (lo - m, hi - m);
                    let anti = |k: usize, y: f64| -> f64 {
                        let e = (-a * y).exp();
                        match k {
                            0 => -e / a,
                            1 => -e * (y / a + 1.0 / (a * a)),
                            _ => -e * (y * y / a + 2.0 * y / (a * a) + 2.0 / (a * a * a)),
                        }
                    };
                    let w = hi - lo;
                    let t = |k| (anti(k, y1) - anti(k, y0)) / w;
                    tilt_select(s, t(0), t(1), t(2))
                }
            },
            Self::TwoPoint { center, half_width } => match s {
                Mean => Some(center),
                SecondMoment => Some(center * center + half_width * half_width),
                Entropy => Some(std::f64::consts::LN_2),
                _ => {
                    let (a, m) = q.tilt_point().ok()?;
                    let k = s.tilt_order()? as i32;
                    let f = |x: f64| (x - m).powi(k) * (-a * (x - m)).exp();
                    Some(0.5 * (f(center - half_width) + f(center + half_width)))
                }
            },
            Self::Exponential { rate } => match s {
                Mean => Some(1.0 / rate),
                SecondMoment => Some(2.0 / (rate * rate)),
                Entropy => Some(1.0 - rate.ln()),
                _ => {
                    let (a, m) = q.tilt_point().ok()?;
                    let r = rate + a;
                    if r <= 0.0 {
                        return None;
                    }
                    let pre = rate * (a * m).exp();
                    tilt_select(
                        s,
                        pre / r,
                        pre * (1.0 / (r * r) - m / r),
                        pre * (2.0 / (r * r * r) - 2.0 * m / (r * r) + m * m / r),
                    )
                }
            },
            Self::Gumbel { alpha, mode } => match s {
                Mean => Some(mode + EULER_MASCHERONI / alpha),
                SecondMoment => {
                    let mean = mode + EULER_MASCHERONI / alpha;
                    Some(PI * PI / (6.0 * alpha * alpha) + mean * mean)
                }
                Entropy => Some(-alpha.ln() + EULER_MASCHERONI + 1.0),
                _ => {
                    let (a, m) = q.tilt_point().ok()?;
                    // x = mode + u/alpha with u standard Gumbel; 𝔼[u^k e^{−r u}] from Γ(1+r).
                    let r = a / alpha;
                    let d = mode - m;
                    let g = gamma(1.0 + r);
                    let psi = digamma(1.0 + r);
                    let eu1 = -g * psi;
                    let eu2 = g * (psi * psi + trigamma(1.0 + r));
                    let pre = (-a * d).exp();
                    tilt_select(
                        s,
                        pre * g,
                        pre * (eu1 / alpha + d * g),
                        pre * (eu2 / (alpha * alpha) + 2.0 * d * eu1 / alpha + d * d * g),
                    )
                }
            },
            Self::VonMisesFisher { kappa, direction } => {
                let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
                let a = vmf_mean_length(kappa) / norm;
                match s {
                    X1 => Some(a * direction[0]),
                    X2 => Some(a * direction[1]),
                    X3 => Some(a * direction[2]),
                    Entropy => Some(vmf_log_normaliser(kappa) - kappa * vmf_mean_length(kappa)),
                    _ => None,
                }
            }
        }
    }
}

fn tilt_select(s: Statistic, t0: f64, t1: f64, t2: f64) -> Option<f64> {
    match s.tilt_order()? {
        0 => Some(t0),
        1 => Some(t1),
        _ => Some(t2),
    }
}
