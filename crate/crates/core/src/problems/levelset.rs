use crate::error::{Error, Result};

/// Piecewise-constant map from a level-set field to a small set of values.
///
/// With interior thresholds `ℓ₁ < … < ℓ_{L−1}` and values `z₁ … z_L`, an entry
/// `ψ` maps to `z_j` where `ℓ_{j−1} < ψ ≤ ℓ_j` (outer thresholds are ±∞), so
/// a value sitting exactly on a threshold belongs to the lower cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetMap {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl LevelSetMap {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != thresholds.len() + 1 {
            return Err(Error::dims("level-set values", thresholds.len() + 1, values.len()));
        }
        if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("level-set thresholds must be finite and strictly increasing".into()));
        }
        Ok(Self { thresholds, values })
    }

    /// Single threshold at 0 with `z₁ = 0` (ψ ≤ 0) and `z₂ = 1` (ψ > 0).
    pub fn binary() -> Self {
        Self::new(vec![0.0], vec![0.0, 1.0]).expect("valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, psi: f64) -> f64 {
        self.values[self.thresholds.partition_point(|&t| t < psi)]
    }

    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        psi.iter().map(|&p| self.eval(p)).collect()
    }
}
