//! Named tolerances shared by every check. Reports echo the values in use.

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Max relative spread of fibre Hessians (Condition 4).
    pub cond4: f64,
    /// Max relative disagreement of the two probe families.
    pub hess: f64,
    /// Max |ω^k_ij − ω^k_ji|.
    pub torsion: f64,
    /// Max |Ω^l_kij|.
    pub flat: f64,
    /// Max Codazzi residual.
    pub codazzi: f64,
    /// Relative disagreement of straight and L-shaped integration paths.
    pub path: f64,
    /// Relative spot-check residual of a covariant-constant field.
    pub field: f64,
    /// Relative error of the covariant Hessian of Φ against g.
    pub massieu_hessian: f64,
    /// Gradient max-norm accepted for fibre members.
    pub fibre_grad: f64,
    /// Gradient max-norm at which a fit stops.
    pub grad: f64,
    /// Largest acceptable condition number of a probe gradient matrix.
    pub probe_condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cond4: 1e-3,
            hess: 1e-3,
            torsion: 1e-3,
            flat: 1e-3,
            codazzi: 1e-3,
            path: 1e-4,
            field: 1e-3,
            massieu_hessian: 1e-3,
            fibre_grad: 1e-6,
            grad: 1e-9,
            probe_condition: 1e8,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 11] = [
        "cond4",
        "hess",
        "torsion",
        "flat",
        "codazzi",
        "path",
        "field",
        "massieu_hessian",
        "fibre_grad",
        "grad",
        "probe_condition",
    ];

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(GeomError::Config(format!("tolerance {key} must be positive, got {value}")));
        }
        let slot = match key {
            "cond4" => &mut self.cond4,
            "hess" => &mut self.hess,
            "torsion" => &mut self.torsion,
            "flat" => &mut self.flat,
            "codazzi" => &mut self.codazzi,
            "path" => &mut self.path,
            "field" => &mut self.field,
            "massieu_hessian" => &mut self.massieu_hessian,
            "fibre_grad" => &mut self.fibre_grad,
            "grad" => &mut self.grad,
            "probe_condition" => &mut self.probe_condition,
            _ => {
                return Err(GeomError::Config(format!(
                    "unknown tolerance `{key}` (known: {})",
                    Self::KEYS.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    /// Parses `key=value`.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| GeomError::Config(format!("expected key=value, got `{assignment}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| GeomError::Config(format!("bad tolerance value in `{assignment}`")))?;
        self.set(k.trim(), v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_known_and_unknown() {
        let mut t = Tolerances::default();
        t.apply("cond4=1e-9").unwrap();
        assert_eq!(t.cond4, 1e-9);
        assert!(t.apply("bogus=1").is_err());
        assert!(t.apply("flat=-1").is_err());
        assert!(t.apply("flat").is_err());
    }
}
