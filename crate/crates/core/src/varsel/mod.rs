//! Variable importance from predictive-variance (or entropy) reductions,
//! relevance probabilities, and Bayes-factor-checked backward selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Observations;
use crate::error::{Error, Result};
use crate::leaf::{entropy, LeafFit, LeafModel, LeafSuffStats, VARIANCE_FLOOR};
use crate::smc::{bayes_factor, run_repetitions, BayesFactorTrace, CloudConfig, ParticleCloud};
use crate::stats::quantiles;
use crate::tree::{Node, Rect, Tree};

/// How node areas enter the variance-reduction integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMethod {
    /// Integrate over the node's bounding box inside the observed support.
    ExactArea,
    /// Replace each area by the node's point count.
    #[default]
    CountApprox,
}

/// `∫_box x̃ᵀ G⁻¹ x̃ dx` for row-major `ginv` (`p × p`) over a box whose
/// coordinates are already centred.
pub fn quad_box_integral(ginv: &[f64], lo: &[f64], hi: &[f64]) -> Result<f64> {
    let p = lo.len();
    if ginv.len() != p * p || hi.len() != p {
        return Err(Error::LengthMismatch { left: ginv.len(), right: p * p });
    }
    let mut vol = 1.0;
    for k in 0..p {
        if !(hi[k] > lo[k]) {
            return Err(Error::DegenerateBox(k));
        }
        vol *= hi[k] - lo[k];
    }
    Ok(vol * quad_box_mean(ginv, lo, hi))
}

/// Mean of `x̃ᵀ G⁻¹ x̃` over the box; zero-width sides act as point masses.
fn quad_box_mean(ginv: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let p = lo.len();
    let mut total = 0.0;
    for i in 0..p {
        let (a, b) = (lo[i], hi[i]);
        let sq = (a * a + a * b + b * b) / 3.0;
        total += ginv[i * p + i] * sq;
        for j in i + 1..p {
            total += (ginv[i * p + j] + ginv[j * p + i]) * 0.25 * (a + b) * (lo[j] + hi[j]);
        }
    }
    total
}

/// Integral of the linear-leaf predictive scale² over `bx` (full predictor
/// dimension; only the model's active dimensions enter the quadratic term).
pub fn linear_leaf_variance_integral(model: &LeafModel, stats: &LeafSuffStats, bx: &Rect) -> Result<f64> {
    let fit = model.fit(stats)?;
    let LeafFit::Linear(l) = &fit else {
        return Err(Error::config("linear_leaf_variance_integral needs a linear leaf"));
    };
    Ok(linear_integral(l, model.active_dims(), bx, bx.volume()))
}

fn linear_integral(l: &crate::leaf::LinearFit, active: &[usize], bx: &Rect, vol: f64) -> f64 {
    let lo: Vec<f64> = active.iter().zip(&l.mean_x).map(|(&d, m)| bx.lo[d] - m).collect();
    let hi: Vec<f64> = active.iter().zip(&l.mean_x).map(|(&d, m)| bx.hi[d] - m).collect();
    let q = quad_box_mean(&l.gram_inv, &lo, &hi);
    (l.resid_var * vol * (1.0 + 1.0 / l.n as f64 + q)).max(vol * VARIANCE_FLOOR)
}

/// `∫_A σ²` (or `|A| H` for classification) for a node's pooled statistics.
fn node_integral(model: &LeafModel, stats: &LeafSuffStats, bx: &Rect, method: DeltaMethod) -> Result<f64> {
    let fit = model.fit(stats)?;
    let n = stats.n() as f64;
    let area = match method {
        DeltaMethod::ExactArea => bx.volume(),
        DeltaMethod::CountApprox => n,
    };
    Ok(match &fit {
        LeafFit::Constant { resid_var, .. } => area * (resid_var * (1.0 + 1.0 / n)).max(VARIANCE_FLOOR),
        LeafFit::Linear(l) => match method {
            DeltaMethod::ExactArea => linear_integral(l, model.active_dims(), bx, area),
            // Σ over the node's points of x̃ᵀG⁻¹x̃ is the trace p.
            DeltaMethod::CountApprox => (l.resid_var * (n + 1.0 + l.p() as f64)).max(n * VARIANCE_FLOOR),
        },
        LeafFit::Multinomial { probs, .. } => area * entropy(probs),
    })
}

/// Reduction in integrated predictive variance (entropy) from splitting `node`.
pub fn delta_node(node: &Node, bx: &Rect, model: &LeafModel, method: DeltaMethod) -> Result<f64> {
    let (Some(rule), Some((l, r))) = (node.rule(), node.children()) else {
        return Err(Error::InvalidMove("delta of a leaf".into()));
    };
    let (bl, br) = bx.split(rule);
    Ok(node_integral(model, node.stats(), bx, method)?
        - node_integral(model, l.stats(), &bl, method)?
        - node_integral(model, r.stats(), &br, method)?)
}

/// `J_k`: sum of the split reductions over nodes splitting on `k`.
pub fn importance(tree: &Tree, model: &LeafModel, support: &Rect, method: DeltaMethod) -> Result<Vec<f64>> {
    let mut j = vec![0.0; support.dim()];
    let mut err = None;
    tree.walk_boxes(support, |n, b| {
        if let Some(rule) = n.rule() {
            match delta_node(n, b, model, method) {
                Ok(d) => j[rule.dim] += d,
                Err(e) => err = Some(e),
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(j),
    }
}

/// Per-particle importance samples of one cloud, in particle order.
pub fn cloud_importance(cloud: &ParticleCloud, support: &Rect, method: DeltaMethod) -> Result<Vec<Vec<f64>>> {
    let model = &cloud.config().model;
    let groups = cloud.unique_trees();
    let vals: Vec<Vec<f64>> =
        groups.par_iter().map(|(t, _)| importance(t, model, support, method)).collect::<Result<_>>()?;
    let mut out = vec![Vec::new(); cloud.len()];
    for ((_, idx), v) in groups.iter().zip(&vals) {
        for &i in idx {
            out[i] = v.clone();
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub method: DeltaMethod,
    /// `[variable][sample]`, pooled over clouds then particles.
    pub samples: Vec<Vec<f64>>,
    /// Pooled `P(J_k > 0)`.
    pub p_positive: Vec<f64>,
    /// Per cloud `P(J_k > 0)`: `[cloud][variable]`.
    pub per_cloud: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl RelevanceReport {
    /// 5%, 50% and 95% sample quantiles per variable.
    pub fn quantiles(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| quantiles(s, &[0.05, 0.5, 0.95])).collect()
    }
}

/// Pool importance samples over clouds. `support` defaults to each cloud's
/// observed input box.
pub fn relevance(clouds: &[ParticleCloud], support: Option<&Rect>, method: DeltaMethod) -> Result<RelevanceReport> {
    let first = clouds.first().ok_or_else(|| Error::config("relevance needs at least one cloud"))?;
    let dim = first.data().dim();
    let mut samples = vec![Vec::new(); dim];
    let mut per_cloud = Vec::with_capacity(clouds.len());
    for c in clouds {
        let own = c.support();
        let s = cloud_importance(c, support.unwrap_or(&own), method)?;
        let mut pos = vec![0.0; dim];
        for j in &s {
            for k in 0..dim {
                samples[k].push(j[k]);
                if j[k] > 0.0 {
                    pos[k] += 1.0;
                }
            }
        }
        per_cloud.push(pos.iter().map(|p| p / s.len() as f64).collect());
    }
    let total = samples[0].len().max(1) as f64;
    let p_positive = samples.iter().map(|s| s.iter().filter(|&&v| v > 0.0).count() as f64 / total).collect();
    let mean = samples.iter().map(|s| s.iter().sum::<f64>() / total).collect();
    Ok(RelevanceReport { method, samples, p_positive, per_cloud, mean })
}

/// Leaf model restricted to the columns `cols` (in that order).
pub fn restrict_model(model: &LeafModel, cols: &[usize]) -> LeafModel {
    match model {
        LeafModel::Linear { active } => LeafModel::Linear {
            active: cols.iter().enumerate().filter(|(_, c)| active.contains(c)).map(|(i, _)| i).collect(),
        },
        m => m.clone(),
    }
}

/// Selection settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub cloud: CloudConfig,
    pub repetitions: usize,
    pub threshold: f64,
    pub max_rounds: usize,
    #[serde(default)]
    pub method: DeltaMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRound {
    /// Columns (of the original data) in the model entering the round.
    pub active: Vec<usize>,
    pub relevance: RelevanceReport,
    /// Columns proposed for removal.
    pub proposed_drop: Vec<usize>,
    /// One trace per repetition: current model over the reduced one.
    pub bayes_factors: Vec<BayesFactorTrace>,
    pub mean_final_log_bf: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selected: Vec<usize>,
    pub rounds: Vec<SelectionRound>,
}

/// Mean final log BF of `full` over `reduced` and the per-repetition traces,
/// refitting both column sets on the same shuffled orders.
pub fn compare_column_sets(
    data: &Observations,
    config: &CloudConfig,
    reps: usize,
    full: &[usize],
    reduced: &[usize],
) -> Result<(f64, Vec<BayesFactorTrace>)> {
    let a = fit_columns(data, config, reps, full, full.len())?;
    let b = fit_columns(data, config, reps, reduced, full.len())?;
    pair_bf(&a, &b)
}

fn pair_bf(a: &[ParticleCloud], b: &[ParticleCloud]) -> Result<(f64, Vec<BayesFactorTrace>)> {
    let traces: Vec<BayesFactorTrace> = a.iter().zip(b).map(|(x, y)| bayes_factor(x, y)).collect::<Result<_>>()?;
    let mean = traces.iter().map(|t| t.final_log_bf()).sum::<f64>() / traces.len() as f64;
    Ok((mean, traces))
}

/// Fit `reps` clouds on `cols`; the prefix is sized for a model with
/// `prefix_dim` columns so traces of nested column sets line up.
pub fn fit_columns(
    data: &Observations,
    config: &CloudConfig,
    reps: usize,
    cols: &[usize],
    prefix_dim: usize,
) -> Result<Vec<ParticleCloud>> {
    let sub = data.select_columns(cols)?;
    let mut cfg = config.clone();
    cfg.model = restrict_model(&config.model, cols);
    if cfg.prefix.is_none() {
        let widest = restrict_model(&config.model, &(0..prefix_dim.max(cols.len())).collect::<Vec<_>>());
        let min = config.prior.min_leaf_size(&widest).max(config.prior.min_leaf_size(&config.model));
        cfg.prefix = Some((2 * min).max(10));
    }
    run_repetitions(&sub, &cfg, reps)
}

/// Repeatedly drop every variable whose relevance probability is below the
/// threshold, keeping the drop only when the mean final log Bayes factor of
/// the larger model over the reduced one is ≤ 0.
pub fn backward_select(data: &Observations, config: &SelectConfig) -> Result<SelectionReport> {
    if !(0.0..1.0).contains(&config.threshold) {
        return Err(Error::config(format!("threshold must lie in [0, 1), got {}", config.threshold)));
    }
    let all: Vec<usize> = (0..data.dim()).collect();
    let mut active = all.clone();
    let mut clouds = fit_columns(data, &config.cloud, config.repetitions, &active, all.len())?;
    let mut rounds = Vec::new();
    for _ in 0..config.max_rounds {
        let rel = relevance(&clouds, None, config.method)?;
        let drop: Vec<usize> =
            active.iter().zip(&rel.p_positive).filter(|(_, &p)| p < config.threshold).map(|(&c, _)| c).collect();
        if drop.is_empty() || drop.len() == active.len() {
            rounds.push(SelectionRound {
                active: active.clone(),
                relevance: rel,
                proposed_drop: drop,
                bayes_factors: Vec::new(),
                mean_final_log_bf: 0.0,
                accepted: false,
            });
            break;
        }
        let reduced: Vec<usize> = active.iter().copied().filter(|c| !drop.contains(c)).collect();
        let next = fit_columns(data, &config.cloud, config.repetitions, &reduced, all.len())?;
        let (mean, traces) = pair_bf(&clouds, &next)?;
        let accepted = mean <= 0.0;
        rounds.push(SelectionRound {
            active: active.clone(),
            relevance: rel,
            proposed_drop: drop,
            bayes_factors: traces,
            mean_final_log_bf: mean,
            accepted,
        });
        if !accepted {
            break;
        }
        active = reduced;
        clouds = next;
    }
    Ok(SelectionReport { selected: active, rounds })
}

#[cfg(test)]
mod tests;
