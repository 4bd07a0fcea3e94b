//! Maximin subsampling and expected-improvement search over a finite pool.

use std::collections::HashMap;

use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::leaf::PredictiveMoments;
use crate::rng::{stream, Stream, StreamRng};
use crate::sensitivity::Restriction;
use crate::smc::ParticleCloud;
use crate::stats::student_t_ln_pdf;
use crate::tree::Node;

/// Per-dimension distance settings for [`maxmin_subsample`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    /// Categorical dimensions contribute a 0/1 mismatch instead of a scaled difference.
    pub categorical: Vec<bool>,
    pub weights: Vec<f64>,
}

impl MetricWeights {
    pub fn ordinal(dim: usize) -> Self {
        MetricWeights { categorical: vec![false; dim], weights: vec![1.0; dim] }
    }
}

/// Greedy maximin subset: start from the farthest pair, then repeatedly add
/// the point farthest from the chosen set. Ties go to the lowest index.
pub fn maxmin_subsample(points: &[Vec<f64>], size: usize, metric: &MetricWeights) -> Result<Vec<usize>> {
    let n = points.len();
    if size < 2 {
        return Err(Error::config("subsample size must be at least 2"));
    }
    if size > n {
        return Err(Error::config(format!("subsample of {size} from {n} points")));
    }
    let dim = metric.weights.len();
    if points.iter().any(|p| p.len() != dim) || metric.categorical.len() != dim {
        return Err(Error::LengthMismatch { left: dim, right: points.first().map_or(0, |p| p.len()) });
    }
    let range: Vec<f64> = (0..dim)
        .map(|k| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[k]), b.max(p[k])));
            if hi > lo { hi - lo } else { 1.0 }
        })
        .collect();
    let d2 = |a: &[f64], b: &[f64]| -> f64 {
        (0..dim)
            .map(|k| {
                if metric.categorical[k] {
                    if a[k] != b[k] { metric.weights[k] } else { 0.0 }
                } else {
                    metric.weights[k] * ((a[k] - b[k]) / range[k]).powi(2)
                }
            })
            .sum()
    };
    // Farthest pair, rows in parallel, lexicographically first on ties.
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut b = (f64::NEG_INFINITY, i, i);
            for j in i + 1..n {
                let d = d2(&points[i], &points[j]);
                if d > b.0 {
                    b = (d, i, j);
                }
            }
            b
        })
        .reduce(|| (f64::NEG_INFINITY, usize::MAX, usize::MAX), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let mut chosen = vec![best.1, best.2];
    let mut mind: Vec<f64> =
        points.iter().map(|p| d2(p, &points[best.1]).min(d2(p, &points[best.2]))).collect();
    let mut taken = vec![false; n];
    taken[best.1] = true;
    taken[best.2] = true;
    while chosen.len() < size {
        let mut pick = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for i in 0..n {
            if !taken[i] && mind[i] > far {
                far = mind[i];
                pick = i;
            }
        }
        taken[pick] = true;
        chosen.push(pick);
        let q = &points[pick];
        mind.par_iter_mut().zip(points.par_iter()).for_each(|(m, p)| *m = m.min(d2(p, q)));
    }
    Ok(chosen)
}

/// `E[max(y_best − Y, 0)]` for `Y = μ + s·T_ν`.
pub fn student_t_ei(y_best: f64, mu: f64, scale2: f64, dof: f64) -> f64 {
    let s = scale2.sqrt();
    let diff = y_best - mu;
    if dof <= 1.0 {
        return truncated_ei(y_best, mu, s, dof);
    }
    let z = diff / s;
    let cdf = StudentsT::new(0.0, 1.0, dof).map(|t| t.cdf(z)).unwrap_or(if z > 0.0 { 1.0 } else { 0.0 });
    let pdf = student_t_ln_pdf(z, 0.0, 1.0, dof).exp();
    (diff * cdf + s * (dof + z * z) / (dof - 1.0) * pdf).max(0.0)
}

/// Heavy-tailed fallback: Simpson quadrature of the improvement over
/// `[μ − 1000 s, y_best]`; the untruncated mean diverges for ν ≤ 1.
fn truncated_ei(y_best: f64, mu: f64, s: f64, dof: f64) -> f64 {
    let lo = mu - 1000.0 * s;
    if y_best <= lo {
        return 0.0;
    }
    let n = 20_000;
    let h = (y_best - lo) / n as f64;
    let g = |y: f64| (y_best - y) * (student_t_ln_pdf(y, mu, s * s, dof)).exp();
    let mut acc = g(lo) + g(y_best);
    for i in 1..n {
        acc += g(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Particle-averaged EI and predictive mean at `x`, scoring shared leaves once.
fn ei_and_mean(cloud: &ParticleCloud, x: &[f64], y_best: f64) -> (f64, f64) {
    let model = &cloud.config().model;
    let mut seen: HashMap<*const Node, (f64, f64)> = HashMap::new();
    let (mut ei, mut mean) = (0.0, 0.0);
    for p in cloud.particles() {
        let leaf = p.leaf_node_for(x);
        let v = *seen.entry(leaf as *const Node).or_insert_with(|| {
            match model.fit_moments(leaf.fit().expect("leaf"), x) {
                PredictiveMoments::Regression { mean, scale2, dof } => (student_t_ei(y_best, mean, scale2, dof), mean),
                PredictiveMoments::Classification { .. } => (0.0, f64::NAN),
            }
        });
        ei += v.0;
        mean += v.1;
    }
    let n = cloud.len() as f64;
    (ei / n, mean / n)
}

/// Per-candidate EI for minimisation, averaged over particles.
pub fn expected_improvement(cloud: &ParticleCloud, candidates: &[Vec<f64>], y_best: f64) -> Result<Vec<f64>> {
    if cloud.config().model.is_classification() {
        return Err(Error::config("expected improvement needs a regression model"));
    }
    Ok(candidates.par_iter().map(|x| ei_and_mean(cloud, x, y_best).0).collect())
}

/// Particle-averaged predictive means.
pub fn predicted_means(cloud: &ParticleCloud, xs: &[Vec<f64>]) -> Vec<f64> {
    xs.par_iter().map(|x| cloud.predict_mean(x)).collect()
}

/// Supplies responses for chosen configurations.
pub trait Observer {
    fn observe(&mut self, x: &[f64], step: usize) -> Result<f64>;
}

/// Replays recorded measurements: samples for a configuration are returned
/// in order, cycling when exhausted.
#[derive(Clone, Debug, Default)]
pub struct ReplayObserver {
    table: HashMap<Vec<u64>, (Vec<f64>, usize)>,
}

impl ReplayObserver {
    pub fn new(rows: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Self {
        let mut table: HashMap<Vec<u64>, (Vec<f64>, usize)> = HashMap::new();
        for (x, y) in rows {
            table.entry(key(&x)).or_default().0.push(y);
        }
        ReplayObserver { table }
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl Observer for ReplayObserver {
    fn observe(&mut self, x: &[f64], _step: usize) -> Result<f64> {
        let (ys, next) = self
            .table
            .get_mut(&key(x))
            .ok_or_else(|| Error::Dataset(format!("no recorded measurement for configuration {x:?}")))?;
        let y = ys[*next % ys.len()];
        *next += 1;
        Ok(y)
    }
}

/// Noisy evaluations of a known surface; the noise of step `k` comes from
/// its own stream.
pub struct SyntheticObserver<F: Fn(&[f64]) -> (f64, f64)> {
    /// Returns `(mean, noise standard deviation)` at `x`.
    pub surface: F,
    pub seed: u64,
}

impl<F: Fn(&[f64]) -> (f64, f64)> Observer for SyntheticObserver<F> {
    fn observe(&mut self, x: &[f64], step: usize) -> Result<f64> {
        let (m, sd) = (self.surface)(x);
        let mut rng: StreamRng = stream(self.seed, Stream::Observer, step as u64, 0);
        let z: f64 = rng.sample(StandardNormal);
        Ok(m + sd * z)
    }
}

/// Adapts a closure `(x, step) -> y`.
pub struct FnObserver<F: FnMut(&[f64], usize) -> Result<f64>>(pub F);

impl<F: FnMut(&[f64], usize) -> Result<f64>> Observer for FnObserver<F> {
    fn observe(&mut self, x: &[f64], step: usize) -> Result<f64> {
        (self.0)(x, step)
    }
}

/// Box or fixed-value filter on one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub dim: usize,
    pub restriction: Restriction,
}

impl Constraint {
    pub fn admits(&self, x: &[f64]) -> bool {
        match self.restriction {
            Restriction::Range { lo, hi } => x[self.dim] >= lo && x[self.dim] <= hi,
            Restriction::Value(v) => x[self.dim] == v,
        }
    }
}

/// Unevaluated configurations plus constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub candidates: Vec<Vec<f64>>,
    pub constraints: Vec<Constraint>,
}

impl CandidatePool {
    pub fn new(candidates: Vec<Vec<f64>>) -> Self {
        CandidatePool { candidates, constraints: Vec::new() }
    }

    pub fn with_constraints(mut self, c: Vec<Constraint>) -> Self {
        self.constraints = c;
        self
    }

    pub fn admits(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.admits(x))
    }

    /// Drop candidates equal to any row in `seen`.
    pub fn remove_evaluated<'a>(&mut self, seen: impl IntoIterator<Item = &'a [f64]>) {
        let seen: std::collections::HashSet<Vec<u64>> = seen.into_iter().map(key).collect();
        self.candidates.retain(|c| !seen.contains(&key(c)));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptStep {
    pub step: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub ei: f64,
    pub predicted_mean: f64,
    pub y_best: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub x_star: Vec<f64>,
    pub predicted_mean: f64,
    pub history: Vec<OptStep>,
    /// The admissible pool ran out before the budget.
    pub exhausted: bool,
}

/// Smallest posterior mean over the configurations observed so far; a
/// single noisy low measurement would otherwise pin `y_best` too low.
fn best_fitted_mean(cloud: &ParticleCloud) -> f64 {
    let seen: Vec<Vec<f64>> = cloud.data().rows().map(|(x, _)| x.to_vec()).collect();
    predicted_means(cloud, &seen).into_iter().fold(f64::INFINITY, f64::min)
}

/// Run `budget` EI steps, updating `cloud` after every observation, then
/// report the minimiser of the predicted mean over `eval_set`
/// (the admissible candidates when `eval_set` is empty).
///
/// `y_best` is the running minimum of [`best_fitted_mean`], so it never increases.
pub fn sequential_optimize(
    pool: &CandidatePool,
    cloud: &mut ParticleCloud,
    budget: usize,
    observer: &mut dyn Observer,
    eval_set: &[Vec<f64>],
) -> Result<OptResult> {
    if cloud.config().model.is_classification() {
        return Err(Error::config("optimisation needs a regression model"));
    }
    let mut remaining: Vec<Vec<f64>> = {
        let mut p = pool.clone();
        p.remove_evaluated(cloud.data().rows().map(|(x, _)| x));
        p.candidates.into_iter().filter(|c| pool.admits(c)).collect()
    };
    let mut y_best = best_fitted_mean(cloud);
    let mut history = Vec::new();
    let mut exhausted = false;
    for step in 0..budget {
        if remaining.is_empty() {
            exhausted = true;
            break;
        }
        let scored: Vec<(f64, f64)> = remaining.par_iter().map(|x| ei_and_mean(cloud, x, y_best)).collect();
        let mut pick = 0;
        for i in 1..scored.len() {
            let (a, b) = (scored[i], scored[pick]);
            if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                pick = i;
            }
        }
        let x = remaining.remove(pick);
        let y = observer.observe(&x, step)?;
        cloud.update(&x, y)?;
        y_best = y_best.min(best_fitted_mean(cloud));
        history.push(OptStep { step, x, y, ei: scored[pick].0, predicted_mean: scored[pick].1, y_best });
    }
    let evals: Vec<Vec<f64>> = if eval_set.is_empty() {
        pool.candidates.iter().filter(|c| pool.admits(c)).cloned().collect()
    } else {
        eval_set.to_vec()
    };
    if evals.is_empty() {
        return Err(Error::config("empty evaluation set"));
    }
    let means = predicted_means(cloud, &evals);
    let mut best = 0;
    for i in 1..means.len() {
        if means[i] < means[best] {
            best = i;
        }
    }
    Ok(OptResult { x_star: evals[best].clone(), predicted_mean: means[best], history, exhausted })
}
