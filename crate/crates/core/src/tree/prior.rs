use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leaf::LeafModel;

/// Chipman-style split prior `p_split(depth) = α (1 + depth)^(-β)` plus the
/// minimum number of points each leaf must hold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreePrior {
    pub alpha: f64,
    pub beta: f64,
    /// Minimum leaf size for constant and multinomial leaves.
    pub min_leaf: usize,
    /// Linear leaves need `linear_points_per_coef · (active + 1)` points
    /// (and at least `min_leaf`).
    pub linear_points_per_coef: usize,
    /// Weight each grow candidate by a uniform split-rule prior (uniform
    /// dimension, then uniform threshold) instead of counting every
    /// candidate as one full tree.
    pub rule_prior: bool,
}

impl Default for TreePrior {
    fn default() -> Self {
        TreePrior { alpha: 0.95, beta: 2.0, min_leaf: 5, linear_points_per_coef: 3, rule_prior: true }
    }
}

impl TreePrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = TreePrior { alpha, beta, ..TreePrior::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.min_leaf == 0 {
            return Err(Error::config("min_leaf must be at least 1"));
        }
        if self.linear_points_per_coef == 0 {
            return Err(Error::config("linear_points_per_coef must be at least 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn p_split(&self, depth: usize) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }

    #[inline]
    pub fn log_split(&self, depth: usize) -> f64 {
        self.p_split(depth).ln()
    }

    #[inline]
    pub fn log_stay(&self, depth: usize) -> f64 {
        (-self.p_split(depth)).ln_1p()
    }

    pub fn min_leaf_size(&self, model: &LeafModel) -> usize {
        match model {
            LeafModel::Linear { active } => {
                (self.linear_points_per_coef * (active.len() + 1)).max(self.min_leaf).max(model.predictive_min_size())
            }
            _ => self.min_leaf,
        }
    }
}
