use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

/// Coordinates of a model point in a named chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterPoint {
    pub coords: Vec<f64>,
    pub chart: String,
}

impl ParameterPoint {
    pub fn new(chart: &str, coords: Vec<f64>) -> Self {
        Self {
            coords,
            chart: chart.to_string(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A coordinate box on the model manifold.
///
/// `lower`/`upper` are open bounds and may be infinite. `sampling` is a finite
/// box inside the domain used for random points and default grids.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartSpec {
    pub id: String,
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sampling: Vec<(f64, f64)>,
}

impl ChartSpec {
    pub fn new(id: &str, names: &[&str], bounds: &[(f64, f64)], sampling: &[(f64, f64)]) -> Self {
        assert!(!names.is_empty(), "chart must have at least one coordinate");
        assert_eq!(names.len(), bounds.len());
        assert_eq!(names.len(), sampling.len());
        for (b, s) in bounds.iter().zip(sampling) {
            assert!(b.0 < b.1 && s.0 < s.1 && s.0 > b.0 && s.1 < b.1);
        }
        Self {
            id: id.to_string(),
            names: names.iter().map(|s| s.to_string()).collect(),
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
            sampling: sampling.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&t, (&lo, &hi))| t.is_finite() && t > lo && t < hi)
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(GeomError::Domain {
                chart: self.id.clone(),
                coords: theta.to_vec(),
            })
        }
    }

    pub fn point(&self, coords: &[f64]) -> Result<ParameterPoint> {
        self.check(coords)?;
        Ok(ParameterPoint::new(&self.id, coords.to_vec()))
    }

    /// Projects onto the closed box shrunk by `margin` from every finite bound.
    pub fn project(&self, theta: &[f64], margin: f64) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&t, (&lo, &hi))| {
                let mut t = t;
                if lo.is_finite() && t < lo + margin {
                    t = lo + margin;
                }
                if hi.is_finite() && t > hi - margin {
                    t = hi - margin;
                }
                t
            })
            .collect()
    }

    /// `per_axis` points per coordinate over the central 60% of the sampling box.
    pub fn default_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let axes: Vec<(f64, f64, usize)> = self
            .sampling
            .iter()
            .map(|&(lo, hi)| {
                let w = hi - lo;
                (lo + 0.2 * w, hi - 0.2 * w, per_axis)
            })
            .collect();
        grid(&axes)
    }

    /// Centre of the sampling box.
    pub fn sample_centre(&self) -> Vec<f64> {
        self.sampling.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.sampling
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect()
    }
}

/// Tensor-product grid; the last axis varies fastest.
pub fn grid(axes: &[(f64, f64, usize)]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for &(lo, hi, n) in axes {
        let values: Vec<f64> = if n <= 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        };
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> ChartSpec {
        ChartSpec::new(
            "mu-sigma",
            &["mu", "sigma"],
            &[(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)],
            &[(-2.0, 2.0), (0.5, 3.0)],
        )
    }

    #[test]
    fn contains_is_open() {
        let c = chart();
        assert!(c.contains(&[0.0, 1.0]));
        assert!(!c.contains(&[0.0, 0.0]));
        assert!(!c.contains(&[0.0]));
        assert!(!c.contains(&[f64::NAN, 1.0]));
    }

    #[test]
    fn projection_stays_inside() {
        let c = chart();
        let p = c.project(&[5.0, -1.0], 1e-9);
        assert_eq!(p[0], 5.0);
        assert!(c.contains(&p));
    }

    #[test]
    fn grid_shape() {
        let g = grid(&[(0.0, 1.0, 3), (5.0, 6.0, 2)]);
        assert_eq!(g.len(), 6);
        assert_eq!(g[1], vec![0.0, 6.0]);
        assert_eq!(chart().default_grid(5).len(), 25);
    }
}
