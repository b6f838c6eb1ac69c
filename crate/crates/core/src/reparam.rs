//! Chart changes θ = Θ⁻¹(ζ) applied to a model.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::chart::ChartSpec;
use crate::dataset::DataSet;
use crate::error::Result;
use crate::model::{ClosedForms, DivergenceKind, ModelDefinition, ProbeCurve, ProbeFamily, StatisticSpec};
use crate::numdiff::{fd_jacobian, DiffConfig};

/// A smooth bijection between the model's chart (θ) and a new chart (ζ).
pub trait ChartMap: Send + Sync {
    fn name(&self) -> &str;
    /// The ζ chart.
    fn target(&self) -> &ChartSpec;
    /// θ ↦ ζ.
    fn forward(&self, theta: &[f64]) -> Vec<f64>;
    /// ζ ↦ θ.
    fn inverse(&self, zeta: &[f64]) -> Vec<f64>;

    /// ∂ζ^i/∂θ^a, row i, column a; `source` is the θ chart.
    fn forward_jacobian(&self, theta: &[f64], source: &ChartSpec) -> Result<DMatrix<f64>> {
        fd_jacobian(|t| Ok(self.forward(t)), theta, source, &DiffConfig::default())
    }

    /// ∂θ^a/∂ζ^i, row a, column i.
    fn inverse_jacobian(&self, zeta: &[f64]) -> Result<DMatrix<f64>> {
        fd_jacobian(|z| Ok(self.inverse(z)), zeta, self.target(), &DiffConfig::default())
    }

    /// For each a, the matrix ∂²θ^a/∂ζ^i∂ζ^j.
    fn inverse_second(&self, zeta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let n = zeta.len();
        let cfg = DiffConfig::default();
        let d = fd_jacobian(
            |z| Ok(self.inverse_jacobian(z)?.as_slice().to_vec()),
            zeta,
            self.target(),
            &cfg,
        )?;
        // Row (a + n·i) of `d` holds ∂_j ∂θ^a/∂ζ^i (column-major flattening).
        Ok((0..n)
            .map(|a| {
                let m = DMatrix::from_fn(n, n, |i, j| d[(a + n * i, j)]);
                (&m + m.transpose()) * 0.5
            })
            .collect())
    }
}

pub struct IdentityMap {
    chart: ChartSpec,
}

impl IdentityMap {
    pub fn new(chart: &ChartSpec) -> Self {
        Self { chart: chart.clone() }
    }
}

impl ChartMap for IdentityMap {
    fn name(&self) -> &str {
        "identity"
    }
    fn target(&self) -> &ChartSpec {
        &self.chart
    }
    fn forward(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }
    fn inverse(&self, zeta: &[f64]) -> Vec<f64> {
        zeta.to_vec()
    }
    fn forward_jacobian(&self, theta: &[f64], _source: &ChartSpec) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(theta.len(), theta.len()))
    }
    fn inverse_jacobian(&self, zeta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(zeta.len(), zeta.len()))
    }
    fn inverse_second(&self, zeta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let n = zeta.len();
        Ok(vec![DMatrix::zeros(n, n); n])
    }
}

/// (μ, σ) ↦ (1/(2σ²), −μ/σ²).
pub struct GaussianCanonicalMap {
    chart: ChartSpec,
}

impl Default for GaussianCanonicalMap {
    fn default() -> Self {
        Self {
            chart: ChartSpec::new(
                "gaussian-canonical",
                &["t1", "t2"],
                &[(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)],
                &[(0.06, 2.0), (-4.0, 4.0)],
            ),
        }
    }
}

impl ChartMap for GaussianCanonicalMap {
    fn name(&self) -> &str {
        "gaussian-canonical"
    }
    fn target(&self) -> &ChartSpec {
        &self.chart
    }
    fn forward(&self, theta: &[f64]) -> Vec<f64> {
        let (mu, s) = (theta[0], theta[1]);
        vec![0.5 / (s * s), -mu / (s * s)]
    }
    fn inverse(&self, zeta: &[f64]) -> Vec<f64> {
        let (t1, t2) = (zeta[0], zeta[1]);
        vec![-t2 / (2.0 * t1), (2.0 * t1).powf(-0.5)]
    }
    fn inverse_jacobian(&self, zeta: &[f64]) -> Result<DMatrix<f64>> {
        let (t1, t2) = (zeta[0], zeta[1]);
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[
                t2 / (2.0 * t1 * t1),
                -0.5 / t1,
                -(2.0 * t1).powf(-1.5),
                0.0,
            ],
        ))
    }
    fn inverse_second(&self, zeta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let (t1, t2) = (zeta[0], zeta[1]);
        let mu = DMatrix::from_row_slice(2, 2, &[-t2 / t1.powi(3), 0.5 / (t1 * t1), 0.5 / (t1 * t1), 0.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[3.0 * (2.0 * t1).powf(-2.5), 0.0, 0.0, 0.0]);
        Ok(vec![mu, sigma])
    }
}

/// (β, μ) ↦ (β, −βμ).
pub struct GceCanonicalMap {
    chart: ChartSpec,
}

impl Default for GceCanonicalMap {
    fn default() -> Self {
        Self {
            chart: ChartSpec::new(
                "gce-canonical",
                &["beta", "t2"],
                &[(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)],
                &[(0.5, 3.0), (-1.5, 4.0)],
            ),
        }
    }
}

impl ChartMap for GceCanonicalMap {
    fn name(&self) -> &str {
        "gce-canonical"
    }
    fn target(&self) -> &ChartSpec {
        &self.chart
    }
    fn forward(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0], -theta[0] * theta[1]]
    }
    fn inverse(&self, zeta: &[f64]) -> Vec<f64> {
        vec![zeta[0], -zeta[1] / zeta[0]]
    }
    fn inverse_jacobian(&self, zeta: &[f64]) -> Result<DMatrix<f64>> {
        let (b, t2) = (zeta[0], zeta[1]);
        Ok(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, t2 / (b * b), -1.0 / b]))
    }
    fn inverse_second(&self, zeta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let (b, t2) = (zeta[0], zeta[1]);
        let mu = DMatrix::from_row_slice(2, 2, &[-2.0 * t2 / b.powi(3), 1.0 / (b * b), 1.0 / (b * b), 0.0]);
        Ok(vec![DMatrix::zeros(2, 2), mu])
    }
}

/// The same data set model written in the ζ chart of `map`.
pub struct Reparametrised {
    inner: Arc<dyn ModelDefinition>,
    map: Arc<dyn ChartMap>,
    name: String,
}

impl Reparametrised {
    pub fn new(inner: Arc<dyn ModelDefinition>, map: Arc<dyn ChartMap>) -> Self {
        let name = format!("{}@{}", inner.name(), map.name());
        Self { inner, map, name }
    }

    pub fn map(&self) -> &dyn ChartMap {
        self.map.as_ref()
    }

    pub fn inner(&self) -> &dyn ModelDefinition {
        self.inner.as_ref()
    }

    fn theta(&self, zeta: &[f64]) -> Result<Vec<f64>> {
        let theta = self.map.inverse(zeta);
        self.inner.chart().check(&theta)?;
        Ok(theta)
    }
}

impl ModelDefinition for Reparametrised {
    fn name(&self) -> &str {
        &self.name
    }
    fn chart(&self) -> &ChartSpec {
        self.map.target()
    }
    fn statistics(&self) -> Vec<StatisticSpec> {
        self.inner.statistics()
    }
    fn kind(&self) -> DivergenceKind {
        self.inner.kind()
    }

    fn divergence(&self, x: &DataSet, zeta: &[f64]) -> Result<f64> {
        let theta = self.theta(zeta)?;
        self.inner.divergence(x, &theta)
    }

    fn analytic_gradient(&self, x: &DataSet, zeta: &[f64]) -> Option<Result<DVector<f64>>> {
        let theta = match self.theta(zeta) {
            Ok(t) => t,
            Err(e) => return Some(Err(e)),
        };
        let g = self.inner.analytic_gradient(x, &theta)?;
        Some((|| Ok(self.map.inverse_jacobian(zeta)?.transpose() * g?))())
    }

    fn analytic_hessian(&self, x: &DataSet, zeta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let theta = match self.theta(zeta) {
            Ok(t) => t,
            Err(e) => return Some(Err(e)),
        };
        let h = self.inner.analytic_hessian(x, &theta)?;
        let g = self.inner.analytic_gradient(x, &theta)?;
        Some((|| {
            let (h, g) = (h?, g?);
            let j = self.map.inverse_jacobian(zeta)?;
            let mut out = j.transpose() * h * &j;
            for (a, s) in self.map.inverse_second(zeta)?.iter().enumerate() {
                out += s * g[a];
            }
            Ok(out)
        })())
    }

    fn fibre(&self, zeta: &[f64], k: usize) -> Result<Vec<DataSet>> {
        self.inner.fibre(&self.theta(zeta)?, k)
    }

    fn probes(&self, zeta: &[f64], family: ProbeFamily) -> Result<Vec<ProbeCurve>> {
        self.inner.probes(&self.theta(zeta)?, family)
    }

    fn closed_form_fit(&self, x: &DataSet) -> Result<Vec<f64>> {
        Ok(self.map.forward(&self.inner.closed_form_fit(x)?))
    }

    fn oracle(&self) -> Option<&dyn ClosedForms> {
        None
    }

    fn varying_terms(&self, x: &DataSet, zeta: &[f64]) -> Result<Vec<(String, f64)>> {
        self.inner.varying_terms(x, &self.theta(zeta)?)
    }

    fn default_grid(&self) -> Vec<Vec<f64>> {
        self.inner
            .default_grid()
            .iter()
            .map(|t| self.map.forward(t))
            .collect()
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.map.forward(&self.inner.sample_point(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_map(map: &dyn ChartMap, zeta: &[f64]) {
        let theta = map.inverse(zeta);
        let back = map.forward(&theta);
        for (a, b) in back.iter().zip(zeta) {
            assert!((a - b).abs() < 1e-12);
        }
        let fd = fd_jacobian(|z| Ok(map.inverse(z)), zeta, map.target(), &DiffConfig::default()).unwrap();
        let an = map.inverse_jacobian(zeta).unwrap();
        assert!((fd - an).abs().max() < 1e-8);
        let n = zeta.len();
        let d = fd_jacobian(
            |z| Ok(map.inverse_jacobian(z)?.as_slice().to_vec()),
            zeta,
            map.target(),
            &DiffConfig::default(),
        )
        .unwrap();
        let s = map.inverse_second(zeta).unwrap();
        for (a, sa) in s.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    assert!((sa[(i, j)] - d[(a + n * i, j)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        check_map(&GaussianCanonicalMap::default(), &[0.4, -0.7]);
        check_map(&GceCanonicalMap::default(), &[1.3, 0.6]);
    }
}
