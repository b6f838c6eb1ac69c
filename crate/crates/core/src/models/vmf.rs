//! von Mises–Fisher directions on the unit sphere, and the cylinder model
//! (angle on the unit circle times an exponential height).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::chart::ChartSpec;
use crate::dataset::{DataSet, Statistic};
use crate::error::{GeomError, Result};
use crate::model::{ClosedForms, DivergenceKind, ModelDefinition, ProbeCurve, ProbeFamily, StatisticSpec};
use crate::special::{ln_bessel_i0, vmf_log_normaliser};
use crate::tensor::Connection;

const UNIT_TOL: f64 = 1e-8;

fn check_kappa(kappa: f64, name: &str) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(GeomError::Config(format!("{name} needs kappa > 0, got {kappa}")))
    }
}

fn mean_vector(x: &DataSet) -> Result<[f64; 3]> {
    Ok([x.get(Statistic::X1)?, x.get(Statistic::X2)?, x.get(Statistic::X3)?])
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn moments3(m: [f64; 3], entropy: Option<f64>) -> DataSet {
    let mut v = vec![(Statistic::X1, m[0]), (Statistic::X2, m[1]), (Statistic::X3, m[2])];
    if let Some(s) = entropy {
        v.push((Statistic::Entropy, s));
    }
    DataSet::moments(&v)
}

pub struct VmfSphere {
    chart: ChartSpec,
    kappa: f64,
    log_norm: f64,
}

/// Unit vector μ(θ, φ) and its coordinate derivatives.
fn frame(theta: f64, phi: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (
        [st * cp, st * sp, ct],
        [ct * cp, ct * sp, -st],
        [-st * sp, st * cp, 0.0],
    )
}

impl VmfSphere {
    pub fn new(kappa: f64) -> Result<Self> {
        check_kappa(kappa, "vmf-sphere")?;
        Ok(Self {
            chart: ChartSpec::new(
                "theta-phi",
                &["theta", "phi"],
                &[(0.0, PI), (f64::NEG_INFINITY, f64::INFINITY)],
                &[(0.05, PI - 0.05), (-PI, PI)],
            ),
            kappa,
            log_norm: vmf_log_normaliser(kappa),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Unit-length data mean; off the sphere is outside the data space.
    fn data(&self, x: &DataSet) -> Result<[f64; 3]> {
        let m = mean_vector(x)?;
        let r = dot(&m, &m).sqrt();
        if (r - 1.0).abs() > UNIT_TOL {
            return Err(GeomError::DataDomain(format!(
                "vmf-sphere data must lie on the unit sphere, |m| = {r}"
            )));
        }
        Ok(m)
    }

    /// Entropy offset that makes D vanish on the fibre.
    fn reference_entropy(&self) -> f64 {
        self.log_norm - self.kappa
    }
}

impl ModelDefinition for VmfSphere {
    fn name(&self) -> &str {
        "vmf-sphere"
    }
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        vec![
            StatisticSpec::plain(Statistic::X1),
            StatisticSpec::plain(Statistic::X2),
            StatisticSpec::plain(Statistic::X3),
            StatisticSpec::offset(Statistic::Entropy),
        ]
    }
    fn kind(&self) -> DivergenceKind {
        DivergenceKind::KullbackLeibler
    }

    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64> {
        let m = self.data(x)?;
        let (u, _, _) = frame(theta[0], theta[1]);
        Ok(-x.get(Statistic::Entropy)? + self.log_norm - self.kappa * dot(&u, &m))
    }

    fn analytic_gradient(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DVector<f64>>> {
        Some(self.data(x).map(|m| {
            let (_, ut, up) = frame(theta[0], theta[1]);
            DVector::from_vec(vec![-self.kappa * dot(&ut, &m), -self.kappa * dot(&up, &m)])
        }))
    }

    fn analytic_hessian(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        Some(self.data(x).map(|m| {
            let (t, p) = (theta[0], theta[1]);
            let (st, ct) = t.sin_cos();
            let (sp, cp) = p.sin_cos();
            let utt = [-st * cp, -st * sp, -ct];
            let utp = [-ct * sp, ct * cp, 0.0];
            let upp = [-st * cp, -st * sp, 0.0];
            let k = -self.kappa;
            DMatrix::from_row_slice(
                2,
                2,
                &[k * dot(&utt, &m), k * dot(&utp, &m), k * dot(&utp, &m), k * dot(&upp, &m)],
            )
        }))
    }

    /// The unit vector as moments, a point mass, and two coincident points.
    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.chart.check(theta)?;
        let (u, _, _) = frame(theta[0], theta[1]);
        let mut out = vec![
            moments3(u, Some(self.reference_entropy())),
            DataSet::empirical(vec![u.to_vec()], vec![1.0])?,
            DataSet::empirical(vec![u.to_vec(), u.to_vec()], vec![0.3, 0.7])?,
        ];
        out.truncate(k);
        Ok(out)
    }

    /// Rotations of the unit vector toward e_θ, e_φ̂ and their diagonals.
    fn probes(&self, theta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        self.chart.check(theta)?;
        let (u, et, up) = frame(theta[0], theta[1]);
        let st = theta[0].sin();
        let ep = [up[0] / st, up[1] / st, up[2] / st];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let dirs: Vec<(&str, [f64; 3])> = match family {
            ProbeFamily::Primary => vec![("toward e_theta", et), ("toward e_phi", ep)],
            ProbeFamily::Secondary => vec![
                ("toward e_theta + e_phi", [s * (et[0] + ep[0]), s * (et[1] + ep[1]), s * (et[2] + ep[2])]),
                ("toward e_theta - e_phi", [s * (et[0] - ep[0]), s * (et[1] - ep[1]), s * (et[2] - ep[2])]),
            ],
        };
        let sref = self.reference_entropy();
        Ok(dirs
            .into_iter()
            .map(|(label, d)| {
                ProbeCurve::new(label, 1.0, move |e| {
                    let (s, c) = f64::sin_cos(e);
                    Ok(moments3([c * u[0] + s * d[0], c * u[1] + s * d[1], c * u[2] + s * d[2]], Some(sref)))
                })
            })
            .collect())
    }

    fn closed_form_fit(&self, x: &DataSet) -> Result<Vec<f64>> {
        let m = self.data(x)?;
        Ok(vec![m[2].clamp(-1.0, 1.0).acos(), m[1].atan2(m[0])])
    }

    fn oracle(&self) -> Option<&dyn ClosedForms> {
        Some(self)
    }
}

impl ClosedForms for VmfSphere {
    fn metric(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let s = theta[0].sin();
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![self.kappa, self.kappa * s * s])))
    }
    fn connection(&self, theta: &[f64]) -> Option<Connection> {
        let (s, c) = theta[0].sin_cos();
        let mut w = Connection::zeros(2);
        w.set(0, 1, 1, -s * c);
        w.set(1, 0, 1, c / s);
        w.set(1, 1, 0, c / s);
        Some(w)
    }
}

/// Angle φ on the unit circle and height with rate λ:
/// D = −S + ln(2π I₀(κ)) − ln λ − κ(m₁ cos φ + m₂ sin φ) + λ m₃.
pub struct VmfCylinder {
    chart: ChartSpec,
    kappa: f64,
    ln_norm: f64,
}

impl VmfCylinder {
    pub fn new(kappa: f64) -> Result<Self> {
        check_kappa(kappa, "vmf-cylinder")?;
        Ok(Self {
            // φ restricted to a simply connected sub-chart.
            chart: ChartSpec::new(
                "phi-lambda",
                &["phi", "lambda"],
                &[(-PI, PI), (0.0, f64::INFINITY)],
                &[(-2.5, 2.5), (0.3, 3.0)],
            ),
            kappa,
            ln_norm: (2.0 * PI).ln() + ln_bessel_i0(kappa),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn data(&self, x: &DataSet) -> Result<[f64; 3]> {
        let m = mean_vector(x)?;
        let r = (m[0] * m[0] + m[1] * m[1]).sqrt();
        if (r - 1.0).abs() > UNIT_TOL || !(m[2] > 0.0) {
            return Err(GeomError::DataDomain(format!(
                "vmf-cylinder data need (m1, m2) on the unit circle and m3 > 0, got {m:?}"
            )));
        }
        Ok(m)
    }

    fn reference_entropy(&self, height: f64) -> f64 {
        self.ln_norm - self.kappa + 1.0 + height.ln()
    }
}

impl ModelDefinition for VmfCylinder {
    fn name(&self) -> &str {
        "vmf-cylinder"
    }
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        vec![
            StatisticSpec::plain(Statistic::X1),
            StatisticSpec::plain(Statistic::X2),
            StatisticSpec::plain(Statistic::X3),
            StatisticSpec::offset(Statistic::Entropy),
        ]
    }
    fn kind(&self) -> DivergenceKind {
        DivergenceKind::KullbackLeibler
    }

    fn divergence(&self, x: &DataSet, theta: &[f64]) -> Result<f64> {
        let m = self.data(x)?;
        let (phi, lambda) = (theta[0], theta[1]);
        let (sp, cp) = phi.sin_cos();
        Ok(-x.get(Statistic::Entropy)? + self.ln_norm - lambda.ln() - self.kappa * (m[0] * cp + m[1] * sp)
            + lambda * m[2])
    }

    fn analytic_gradient(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DVector<f64>>> {
        Some(self.data(x).map(|m| {
            let (phi, lambda) = (theta[0], theta[1]);
            let (sp, cp) = phi.sin_cos();
            DVector::from_vec(vec![
                -self.kappa * (-m[0] * sp + m[1] * cp),
                -1.0 / lambda + m[2],
            ])
        }))
    }

    fn analytic_hessian(&self, x: &DataSet, theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        Some(self.data(x).map(|m| {
            let (phi, lambda) = (theta[0], theta[1]);
            let (sp, cp) = phi.sin_cos();
            DMatrix::from_row_slice(
                2,
                2,
                &[self.kappa * (m[0] * cp + m[1] * sp), 0.0, 0.0, 1.0 / (lambda * lambda)],
            )
        }))
    }

    /// Moments at (cos φ, sin φ, 1/λ), then samples at the same angle whose
    /// heights average to 1/λ.
    fn fibre(&self, theta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.chart.check(theta)?;
        let (phi, lambda) = (theta[0], theta[1]);
        let (sp, cp) = phi.sin_cos();
        let h = 1.0 / lambda;
        let at = |z: f64| vec![cp, sp, z * h];
        let mut out = vec![
            moments3([cp, sp, h], Some(self.reference_entropy(h))),
            DataSet::empirical(vec![at(0.5), at(1.5)], vec![1.0, 1.0])?,
            DataSet::empirical(vec![at(0.25), at(1.0), at(1.75)], vec![1.0, 1.0, 1.0])?,
        ];
        out.truncate(k);
        Ok(out)
    }

    fn probes(&self, theta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        self.chart.check(theta)?;
        let (phi, lambda) = (theta[0], theta[1]);
        let h = 1.0 / lambda;
        let me = self.reference_entropy(h);
        let at = move |dphi: f64, dh: f64| {
            let (s, c) = (phi + dphi).sin_cos();
            Ok(moments3([c, s, h * (1.0 + dh)], Some(me)))
        };
        // Heights are moved relatively; |ε| stays below 1 so m₃ > 0.
        Ok(match family {
            ProbeFamily::Primary => vec![
                ProbeCurve::new("rotate", 0.5, move |e| at(e, 0.0)),
                ProbeCurve::new("raise", 0.5, move |e| at(0.0, e)),
            ],
            ProbeFamily::Secondary => vec![
                ProbeCurve::new("rotate and raise", 0.5, move |e| at(e, e)),
                ProbeCurve::new("rotate and lower", 0.5, move |e| at(e, -e)),
            ],
        })
    }

    fn closed_form_fit(&self, x: &DataSet) -> Result<Vec<f64>> {
        let m = self.data(x)?;
        Ok(vec![m[1].atan2(m[0]), 1.0 / m[2]])
    }

    fn oracle(&self) -> Option<&dyn ClosedForms> {
        Some(self)
    }
}

impl ClosedForms for VmfCylinder {
    fn metric(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let l = theta[1];
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![self.kappa, 1.0 / (l * l)])))
    }
    fn connection(&self, _theta: &[f64]) -> Option<Connection> {
        Some(Connection::zeros(2))
    }
    fn affine_coordinates(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(theta.to_vec())
    }
    fn massieu(&self, theta: &[f64]) -> Option<f64> {
        let (phi, lambda) = (theta[0], theta[1]);
        Some(0.5 * self.kappa * phi * phi - lambda.ln())
    }
}
