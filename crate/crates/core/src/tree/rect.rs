use serde::{Deserialize, Serialize};

use super::SplitRule;

/// Axis-aligned box `[lo_k, hi_k]` per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Rect { lo, hi }
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Self {
        Rect { lo: bounds.iter().map(|b| b.0).collect(), hi: bounds.iter().map(|b| b.1).collect() }
    }

    pub fn unit(dim: usize) -> Self {
        Rect { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Product of widths over dimensions with positive width; zero-width
    /// (constant) dimensions contribute a factor of one.
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).filter(|w| *w > 0.0).product()
    }

    pub fn split(&self, rule: &SplitRule) -> (Rect, Rect) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[rule.dim] = rule.threshold.min(self.hi[rule.dim]);
        right.lo[rule.dim] = rule.threshold.max(self.lo[rule.dim]);
        (left, right)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lo.iter().zip(&self.hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect()
    }
}
