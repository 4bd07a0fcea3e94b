//! Leaf models: constant mean, linear plane and multinomial proportions.
//!
//! Constant and linear leaves use normal errors with the reference prior
//! π ∝ 1/σ²; their predictives are Student-t. Multinomial leaves use a
//! symmetric Dirichlet(1/C) prior. Marginals use a unit prior constant so
//! that leaves of different sizes are comparable inside one tree.

mod linear;
mod stats;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::stats::{student_t_ln_pdf, LN_PI};

pub use linear::{LinearFit, GRAM_JITTER};
pub use stats::{ClassCounts, LinearStats, MomentStats};

/// Lower bound on Student-t squared scales (and residual variances).
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafModel {
    Constant,
    /// Regression on the listed predictor dimensions; others are split-only.
    Linear { active: Vec<usize> },
    Multinomial { classes: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafKind {
    Constant,
    Linear,
    Multinomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafSuffStats {
    Constant(MomentStats),
    Linear(LinearStats),
    Multinomial(ClassCounts),
}

impl LeafSuffStats {
    pub fn n(&self) -> usize {
        (match self {
            LeafSuffStats::Constant(m) => m.n,
            LeafSuffStats::Linear(l) => l.n(),
            LeafSuffStats::Multinomial(c) => c.n(),
        }) as usize
    }

    /// Σy over the leaf (class index sums for multinomial leaves are not meaningful).
    pub fn sum_y(&self) -> f64 {
        match self {
            LeafSuffStats::Constant(m) => m.sum(),
            LeafSuffStats::Linear(l) => l.response.sum(),
            LeafSuffStats::Multinomial(c) => c.counts.iter().enumerate().map(|(k, &n)| k as f64 * n as f64).sum(),
        }
    }

    pub fn sum_y2(&self) -> f64 {
        match self {
            LeafSuffStats::Constant(m) => m.sum_sq(),
            LeafSuffStats::Linear(l) => l.response.sum_sq(),
            LeafSuffStats::Multinomial(c) => {
                c.counts.iter().enumerate().map(|(k, &n)| (k * k) as f64 * n as f64).sum()
            }
        }
    }

    pub fn class_counts(&self) -> Option<&[u64]> {
        match self {
            LeafSuffStats::Multinomial(c) => Some(&c.counts),
            _ => None,
        }
    }

    /// Statistics of the union of both point sets.
    pub fn merge(&self, other: &LeafSuffStats) -> LeafSuffStats {
        match (self, other) {
            (LeafSuffStats::Constant(a), LeafSuffStats::Constant(b)) => LeafSuffStats::Constant(a.merge(b)),
            (LeafSuffStats::Linear(a), LeafSuffStats::Linear(b)) => LeafSuffStats::Linear(a.merge(b)),
            (LeafSuffStats::Multinomial(a), LeafSuffStats::Multinomial(b)) => LeafSuffStats::Multinomial(a.merge(b)),
            _ => panic!("merging statistics of different leaf models"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PredictiveMoments {
    /// Student-t with squared scale `scale2` (reported as the predictive variance).
    Regression { mean: f64, scale2: f64, dof: f64 },
    Classification { probs: Vec<f64> },
}

impl PredictiveMoments {
    pub fn mean(&self) -> f64 {
        match self {
            PredictiveMoments::Regression { mean, .. } => *mean,
            PredictiveMoments::Classification { probs } => {
                probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
            }
        }
    }

    /// Moment variance `scale2 · ν/(ν-2)`; infinite for ν ≤ 2.
    pub fn moment_variance(&self) -> f64 {
        match self {
            PredictiveMoments::Regression { scale2, dof, .. } if *dof > 2.0 => scale2 * dof / (dof - 2.0),
            _ => f64::INFINITY,
        }
    }
}

/// Cached fit of a leaf's statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeafFit {
    Constant { n: u64, mean: f64, resid_var: f64, log_marginal: f64 },
    Linear(LinearFit),
    Multinomial { n: u64, probs: Vec<f64>, log_marginal: f64 },
}

impl LeafFit {
    pub fn log_marginal(&self) -> f64 {
        match self {
            LeafFit::Constant { log_marginal, .. } | LeafFit::Multinomial { log_marginal, .. } => *log_marginal,
            LeafFit::Linear(l) => l.log_marginal,
        }
    }

    pub fn jittered(&self) -> bool {
        matches!(self, LeafFit::Linear(l) if l.jittered)
    }
}

/// One posterior draw of a leaf's mean parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum LeafDraw {
    Constant(f64),
    Linear { intercept: f64, mean_x: Vec<f64>, beta: Vec<f64> },
    Classes(Vec<f64>),
}

impl LeafDraw {
    /// Mean surface at `x` (full predictor vector); for classes, probability of `class`.
    pub fn value(&self, model: &LeafModel, x: &[f64], class: usize) -> f64 {
        match (self, model) {
            (LeafDraw::Constant(m), _) => *m,
            (LeafDraw::Linear { intercept, mean_x, beta }, LeafModel::Linear { active }) => {
                intercept + active.iter().zip(mean_x.iter().zip(beta)).map(|(&d, (m, b))| b * (x[d] - m)).sum::<f64>()
            }
            (LeafDraw::Classes(p), _) => p[class],
            _ => unreachable!("draw does not match leaf model"),
        }
    }
}

fn constant_marginal(n: u64, ss: f64) -> (f64, f64) {
    let nu = n as f64 - 1.0;
    let ss = ss.max(nu * VARIANCE_FLOOR);
    let lm = -0.5 * nu * LN_PI - 0.5 * (n as f64).ln() + ln_gamma(0.5 * nu) - 0.5 * nu * ss.ln();
    (lm, ss / nu)
}

fn multinomial_marginal(counts: &[u64]) -> f64 {
    let c = counts.len() as f64;
    let a = 1.0 / c;
    let n: u64 = counts.iter().sum();
    let lg_a = ln_gamma(a);
    -ln_gamma(n as f64 + 1.0) + counts.iter().map(|&k| if k == 0 { 0.0 } else { ln_gamma(k as f64 + a) - lg_a }).sum::<f64>()
}

impl LeafModel {
    pub fn kind(&self) -> LeafKind {
        match self {
            LeafModel::Constant => LeafKind::Constant,
            LeafModel::Linear { .. } => LeafKind::Linear,
            LeafModel::Multinomial { .. } => LeafKind::Multinomial,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, LeafModel::Multinomial { .. })
    }

    pub fn active_dims(&self) -> &[usize] {
        match self {
            LeafModel::Linear { active } => active,
            _ => &[],
        }
    }

    /// Smallest leaf for which the predictive is proper.
    pub fn predictive_min_size(&self) -> usize {
        match self {
            LeafModel::Constant => 2,
            LeafModel::Linear { active } => active.len() + 2,
            LeafModel::Multinomial { .. } => 0,
        }
    }

    pub fn empty_stats(&self) -> LeafSuffStats {
        match self {
            LeafModel::Constant => LeafSuffStats::Constant(MomentStats::default()),
            LeafModel::Linear { active } => LeafSuffStats::Linear(LinearStats::new(active.len())),
            LeafModel::Multinomial { classes } => LeafSuffStats::Multinomial(ClassCounts::new(*classes)),
        }
    }

    pub fn push(&self, stats: &mut LeafSuffStats, x: &[f64], y: f64) {
        match (self, stats) {
            (LeafModel::Constant, LeafSuffStats::Constant(m)) => m.push(y),
            (LeafModel::Linear { active }, LeafSuffStats::Linear(l)) => {
                let mut buf = [0.0f64; 16];
                if active.len() <= 16 {
                    for (b, &d) in buf.iter_mut().zip(active) {
                        *b = x[d];
                    }
                    l.push(&buf[..active.len()], y);
                } else {
                    let xa: Vec<f64> = active.iter().map(|&d| x[d]).collect();
                    l.push(&xa, y);
                }
            }
            (LeafModel::Multinomial { classes }, LeafSuffStats::Multinomial(c)) => {
                let k = y as usize;
                debug_assert!(k < *classes, "class label {k} out of range");
                c.counts[k.min(classes - 1)] += 1;
            }
            _ => panic!("statistics do not match leaf model"),
        }
    }

    pub fn stats_from<'a>(&self, points: impl IntoIterator<Item = (&'a [f64], f64)>) -> LeafSuffStats {
        let mut s = self.empty_stats();
        for (x, y) in points {
            self.push(&mut s, x, y);
        }
        s
    }

    fn check_size(&self, stats: &LeafSuffStats) -> Result<()> {
        let required = self.predictive_min_size();
        if stats.n() < required {
            return Err(Error::UndefinedPredictive { n: stats.n(), required });
        }
        Ok(())
    }

    pub fn fit(&self, stats: &LeafSuffStats) -> Result<LeafFit> {
        self.check_size(stats)?;
        Ok(match stats {
            LeafSuffStats::Constant(m) => {
                let (log_marginal, resid_var) = constant_marginal(m.n, m.ss);
                LeafFit::Constant { n: m.n, mean: m.mean, resid_var, log_marginal }
            }
            LeafSuffStats::Linear(l) => LeafFit::Linear(linear::fit(l)?),
            LeafSuffStats::Multinomial(c) => {
                let n = c.n();
                let a = 1.0 / c.counts.len() as f64;
                let probs = c.counts.iter().map(|&k| (k as f64 + a) / (n as f64 + 1.0)).collect();
                LeafFit::Multinomial { n, probs, log_marginal: multinomial_marginal(&c.counts) }
            }
        })
    }

    /// Closed-form log marginal likelihood of the leaf's responses.
    pub fn log_marginal(&self, stats: &LeafSuffStats) -> Result<f64> {
        self.log_marginal_flagged(stats).map(|(m, _)| m)
    }

    /// Log marginal plus a flag telling whether the Gram matrix needed jitter.
    pub(crate) fn log_marginal_flagged(&self, stats: &LeafSuffStats) -> Result<(f64, bool)> {
        self.check_size(stats)?;
        match stats {
            LeafSuffStats::Constant(m) => Ok((constant_marginal(m.n, m.ss).0, false)),
            LeafSuffStats::Linear(l) => linear::log_marginal(l),
            LeafSuffStats::Multinomial(c) => Ok((multinomial_marginal(&c.counts), false)),
        }
    }

    pub fn log_predictive(&self, stats: &LeafSuffStats, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.fit_log_predictive(&self.fit(stats)?, x, y))
    }

    pub fn predictive_moments(&self, stats: &LeafSuffStats, x: &[f64]) -> Result<PredictiveMoments> {
        Ok(self.fit_moments(&self.fit(stats)?, x))
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.active_dims().iter().map(|&d| x[d]).collect()
    }

    pub fn fit_moments(&self, fit: &LeafFit, x: &[f64]) -> PredictiveMoments {
        match fit {
            LeafFit::Constant { n, mean, resid_var, .. } => PredictiveMoments::Regression {
                mean: *mean,
                scale2: (resid_var * (1.0 + 1.0 / *n as f64)).max(VARIANCE_FLOOR),
                dof: *n as f64 - 1.0,
            },
            LeafFit::Linear(l) => {
                let xa = self.project(x);
                PredictiveMoments::Regression { mean: l.location(&xa), scale2: l.scale2(&xa), dof: l.dof }
            }
            LeafFit::Multinomial { probs, .. } => PredictiveMoments::Classification { probs: probs.clone() },
        }
    }

    /// Posterior predictive mean of the response (class-probability vector not needed).
    pub fn fit_mean(&self, fit: &LeafFit, x: &[f64]) -> f64 {
        match fit {
            LeafFit::Constant { mean, .. } => *mean,
            LeafFit::Linear(l) => {
                let active = self.active_dims();
                l.mean_y + active.iter().zip(l.beta.iter().zip(&l.mean_x)).map(|(&d, (b, m))| b * (x[d] - m)).sum::<f64>()
            }
            LeafFit::Multinomial { probs, .. } => probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    pub fn fit_log_predictive(&self, fit: &LeafFit, x: &[f64], y: f64) -> f64 {
        match fit {
            LeafFit::Constant { n, mean, resid_var, .. } => {
                let s2 = (resid_var * (1.0 + 1.0 / *n as f64)).max(VARIANCE_FLOOR);
                student_t_ln_pdf(y, *mean, s2, *n as f64 - 1.0)
            }
            LeafFit::Linear(l) => {
                let xa = self.project(x);
                student_t_ln_pdf(y, l.location(&xa), l.scale2(&xa), l.dof)
            }
            LeafFit::Multinomial { probs, .. } => probs.get(y as usize).map_or(f64::NEG_INFINITY, |p| p.ln()),
        }
    }

    /// Draw the leaf's mean parameters from their posterior (observation noise excluded).
    pub fn draw<R: Rng + ?Sized>(&self, fit: &LeafFit, rng: &mut R) -> LeafDraw {
        match fit {
            LeafFit::Constant { n, mean, resid_var, .. } => {
                let nu = *n as f64 - 1.0;
                let sigma2 = resid_var * nu / ChiSquared::new(nu).unwrap().sample(rng);
                let z: f64 = StandardNormal.sample(rng);
                LeafDraw::Constant(mean + (sigma2 / *n as f64).sqrt() * z)
            }
            LeafFit::Linear(l) => {
                let p = l.p();
                let sigma2 = l.resid_var * l.dof / ChiSquared::new(l.dof).unwrap().sample(rng);
                let sigma = sigma2.sqrt();
                let z0: f64 = StandardNormal.sample(rng);
                let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
                // β = β̂ + σ L⁻ᵀ z, solved by back substitution.
                let mut u = vec![0.0; p];
                for i in (0..p).rev() {
                    let mut s = z[i];
                    for j in i + 1..p {
                        s -= l.chol_l[j * p + i] * u[j];
                    }
                    u[i] = s / l.chol_l[i * p + i];
                }
                LeafDraw::Linear {
                    intercept: l.mean_y + (sigma2 / l.n as f64).sqrt() * z0,
                    mean_x: l.mean_x.clone(),
                    beta: l.beta.iter().zip(&u).map(|(b, ui)| b + sigma * ui).collect(),
                }
            }
            LeafFit::Multinomial { n, probs, .. } => {
                // probs·(n+1) recovers count + 1/C.
                let g: Vec<f64> =
                    probs.iter().map(|p| Gamma::new(p * (*n as f64 + 1.0), 1.0).unwrap().sample(rng)).collect();
                let total: f64 = g.iter().sum();
                LeafDraw::Classes(g.iter().map(|v| v / total).collect())
            }
        }
    }
}

/// Shannon entropy with natural logarithms.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}
