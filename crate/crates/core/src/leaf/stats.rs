//! Sufficient statistics, maintained with centred (Welford/Chan) updates.

use serde::{Deserialize, Serialize};

/// Count, mean and centred sum of squares of a scalar response.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub n: u64,
    pub mean: f64,
    /// Σ (y - ȳ)².
    pub ss: f64,
}

impl MomentStats {
    pub fn from_sums(n: u64, sum: f64, sum2: f64) -> Self {
        if n == 0 {
            return MomentStats::default();
        }
        let mean = sum / n as f64;
        MomentStats { n, mean, ss: (sum2 - sum * mean).max(0.0) }
    }

    #[inline]
    pub fn push(&mut self, y: f64) {
        self.n += 1;
        let d = y - self.mean;
        self.mean += d / self.n as f64;
        self.ss += d * (y - self.mean);
    }

    pub fn merge(&self, other: &MomentStats) -> MomentStats {
        if self.n == 0 {
            return other.clone();
        }
        if other.n == 0 {
            return self.clone();
        }
        let n = self.n + other.n;
        let (na, nb, nf) = (self.n as f64, other.n as f64, n as f64);
        let d = other.mean - self.mean;
        MomentStats { n, mean: self.mean + d * nb / nf, ss: self.ss + other.ss + d * d * na * nb / nf }
    }

    pub fn sum(&self) -> f64 {
        self.n as f64 * self.mean
    }

    pub fn sum_sq(&self) -> f64 {
        self.ss + self.n as f64 * self.mean * self.mean
    }
}

/// Statistics for a leaf regression on `p` active predictors, stored centred:
/// Gram matrix `G = Σ x̃ x̃ᵀ` and cross products `Σ x̃ (y - ȳ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearStats {
    pub response: MomentStats,
    pub mean_x: Vec<f64>,
    /// Row-major `p × p`.
    pub gram: Vec<f64>,
    pub cross: Vec<f64>,
}

impl LinearStats {
    pub fn new(p: usize) -> Self {
        LinearStats { response: MomentStats::default(), mean_x: vec![0.0; p], gram: vec![0.0; p * p], cross: vec![0.0; p] }
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.mean_x.len()
    }

    pub fn n(&self) -> u64 {
        self.response.n
    }

    /// Rank-one update with the active predictors `xa`.
    pub fn push(&mut self, xa: &[f64], y: f64) {
        let p = self.p();
        debug_assert_eq!(xa.len(), p);
        let n = self.response.n + 1;
        let nf = n as f64;
        let dy = y - self.response.mean;
        // (n-1)/n * d dᵀ, written with the pre-update deviations.
        let w = (nf - 1.0) / nf;
        let mut dx = [0.0f64; 16];
        let mut dx_heap;
        let dx: &mut [f64] = if p <= 16 {
            &mut dx[..p]
        } else {
            dx_heap = vec![0.0; p];
            &mut dx_heap
        };
        for i in 0..p {
            dx[i] = xa[i] - self.mean_x[i];
        }
        for i in 0..p {
            let wi = w * dx[i];
            for j in 0..p {
                self.gram[i * p + j] += wi * dx[j];
            }
            self.cross[i] += wi * dy;
        }
        for i in 0..p {
            self.mean_x[i] += dx[i] / nf;
        }
        self.response.push(y);
    }

    pub fn merge(&self, other: &LinearStats) -> LinearStats {
        if self.n() == 0 {
            return other.clone();
        }
        if other.n() == 0 {
            return self.clone();
        }
        let p = self.p();
        let (na, nb) = (self.n() as f64, other.n() as f64);
        let nf = na + nb;
        let c = na * nb / nf;
        let dy = other.response.mean - self.response.mean;
        let dx: Vec<f64> = (0..p).map(|i| other.mean_x[i] - self.mean_x[i]).collect();
        let mut out = LinearStats::new(p);
        for i in 0..p {
            for j in 0..p {
                out.gram[i * p + j] = self.gram[i * p + j] + other.gram[i * p + j] + c * dx[i] * dx[j];
            }
            out.cross[i] = self.cross[i] + other.cross[i] + c * dx[i] * dy;
            out.mean_x[i] = self.mean_x[i] + dx[i] * nb / nf;
        }
        out.response = self.response.merge(&other.response);
        out
    }
}

/// Per-class counts for a multinomial leaf.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub counts: Vec<u64>,
}

impl ClassCounts {
    pub fn new(classes: usize) -> Self {
        ClassCounts { counts: vec![0; classes] }
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&self, other: &ClassCounts) -> ClassCounts {
        ClassCounts { counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect() }
    }
}
