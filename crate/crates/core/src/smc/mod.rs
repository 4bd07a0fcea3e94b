//! Particle learning for dynamic trees.
//!
//! Each update resamples particles by their predictive probability of the new
//! observation, then propagates every survivor by one local move (stay, prune
//! the parent of the new point's leaf, or grow that leaf) drawn from its
//! conditional posterior. Particles whose relevant subtree is shared are
//! scored once; every random draw comes from a stream keyed by particle index
//! and step, so results do not depend on thread scheduling.

mod priorsim;
mod propagate;

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Observations;
use crate::error::{Error, Result};
use crate::leaf::{LeafModel, PredictiveMoments};
use crate::rng::{derive_seed, stream, Stream};
use crate::stats::log_mean_exp;
use crate::tree::{Node, Rect, Tree, TreeContext, TreePrior};

pub use priorsim::{prior_split_simulation, PriorSimReport};
pub use propagate::Move;

/// Filter settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudConfig {
    pub model: LeafModel,
    #[serde(default)]
    pub prior: TreePrior,
    pub particles: usize,
    pub seed: u64,
    /// Initial single-leaf prefix; defaults to `max(2 · min leaf, 10)`.
    #[serde(default)]
    pub prefix: Option<usize>,
}

impl CloudConfig {
    pub fn new(model: LeafModel, particles: usize, seed: u64) -> Self {
        CloudConfig { model, prior: TreePrior::default(), particles, seed, prefix: None }
    }

    pub fn with_prior(mut self, prior: TreePrior) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_prefix(mut self, prefix: usize) -> Self {
        self.prefix = Some(prefix);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn min_leaf(&self) -> usize {
        self.prior.min_leaf_size(&self.model)
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.unwrap_or_else(|| (2 * self.min_leaf()).max(10))
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.particles == 0 {
            return Err(Error::config("at least one particle is required"));
        }
        if let LeafModel::Multinomial { classes } = self.model {
            if classes < 2 {
                return Err(Error::config("multinomial leaves need at least two classes"));
            }
        }
        Ok(())
    }
}

/// Outcome of one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// log of the particle-averaged predictive density of the new point.
    pub log_mean_predictive: f64,
    /// All predictive weights underflowed and resampling used uniform weights.
    pub degenerate: bool,
}

/// N tree particles over a shared, growing data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    config: CloudConfig,
    data: Observations,
    particles: Vec<Tree>,
    trace: Vec<f64>,
    t_init: usize,
    degenerate_steps: Vec<usize>,
}

impl ParticleCloud {
    /// All particles start as the single-leaf tree on `prefix`.
    pub fn init(prefix: Observations, config: CloudConfig) -> Result<Self> {
        config.validate()?;
        let need = config.min_leaf().max(config.model.predictive_min_size());
        if prefix.len() < need {
            return Err(Error::config(format!(
                "initial prefix has {} points; the leaf model needs at least {need}",
                prefix.len()
            )));
        }
        check_labels(&config.model, &prefix)?;
        let points: Vec<u32> = (0..prefix.len() as u32).collect();
        let tree = {
            let ctx = TreeContext { model: &config.model, prior: &config.prior, data: &prefix };
            Tree::single_leaf(points, &ctx)?
        };
        let t_init = prefix.len();
        Ok(ParticleCloud {
            particles: vec![tree; config.particles],
            config,
            data: prefix,
            trace: Vec::new(),
            t_init,
            degenerate_steps: Vec::new(),
        })
    }

    /// Filter through `data` in its given order.
    pub fn fit(data: &Observations, config: CloudConfig) -> Result<Self> {
        let k = config.prefix_len().min(data.len());
        let prefix = data.subset(&(0..k).collect::<Vec<_>>());
        let mut cloud = ParticleCloud::init(prefix, config)?;
        cloud.extend(&data.subset(&(k..data.len()).collect::<Vec<_>>()))?;
        Ok(cloud)
    }

    /// Feed every row of `data`, in order.
    pub fn extend(&mut self, data: &Observations) -> Result<()> {
        if data.dim() != self.data.dim() {
            return Err(Error::LengthMismatch { left: data.dim(), right: self.data.dim() });
        }
        for (x, y) in data.rows() {
            self.update(x, y)?;
        }
        Ok(())
    }

    pub fn config(&self) -> &CloudConfig {
        &self.config
    }

    pub fn data(&self) -> &Observations {
        &self.data
    }

    pub fn particles(&self) -> &[Tree] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Observations consumed so far.
    pub fn t(&self) -> usize {
        self.data.len()
    }

    pub fn t_init(&self) -> usize {
        self.t_init
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// Steps at which resampling fell back to uniform weights.
    pub fn degenerate_steps(&self) -> &[usize] {
        &self.degenerate_steps
    }

    /// Sum of the per-step log mean predictive densities.
    pub fn log_marginal(&self) -> f64 {
        self.trace.iter().sum()
    }

    /// Observed bounding box of the inputs.
    pub fn support(&self) -> Rect {
        Rect::from_bounds(&self.data.support())
    }

    pub fn context(&self) -> TreeContext<'_> {
        TreeContext { model: &self.config.model, prior: &self.config.prior, data: &self.data }
    }

    /// Reassemble a cloud from its parts (snapshot loading).
    pub(crate) fn from_parts(
        config: CloudConfig,
        data: Observations,
        particles: Vec<Tree>,
        trace: Vec<f64>,
        t_init: usize,
        degenerate_steps: Vec<usize>,
    ) -> Result<Self> {
        config.validate()?;
        if particles.len() != config.particles {
            return Err(Error::Snapshot(format!(
                "{} particles stored, configuration says {}",
                particles.len(),
                config.particles
            )));
        }
        if trace.len() + t_init != data.len() {
            return Err(Error::Snapshot("trace length does not match the data".into()));
        }
        if particles.iter().any(|p| p.num_points() != data.len()) {
            return Err(Error::Snapshot("particle does not cover the stored data".into()));
        }
        Ok(ParticleCloud { config, data, particles, trace, t_init, degenerate_steps })
    }

    /// Per-particle log predictive density of `(x, y)`, scoring shared leaves once.
    pub fn log_predictive(&self, x: &[f64], y: f64) -> Vec<f64> {
        let model = &self.config.model;
        self.map_leaves(x, |leaf| model.fit_log_predictive(leaf.fit().expect("leaf"), x, y))
    }

    /// Per-particle predictive at `x`.
    pub fn predict(&self, x: &[f64]) -> Vec<PredictiveMoments> {
        let model = &self.config.model;
        self.map_leaves(x, |leaf| model.fit_moments(leaf.fit().expect("leaf"), x))
    }

    /// Particle-averaged predictive mean at `x`.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let model = &self.config.model;
        let v = self.map_leaves(x, |leaf| model.fit_mean(leaf.fit().expect("leaf"), x));
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Evaluate `f` once per distinct leaf containing `x` and spread the
    /// result over the particles in index order.
    fn map_leaves<T: Clone + Send>(&self, x: &[f64], f: impl Fn(&Node) -> T + Sync) -> Vec<T> {
        let leaves: Vec<&Node> = self.particles.iter().map(|p| p.leaf_node_for(x)).collect();
        let (unique, slot) = dedupe(&leaves);
        let vals: Vec<T> = unique.iter().map(|n| f(n)).collect();
        slot.into_iter().map(|s| vals[s].clone()).collect()
    }

    /// Distinct trees with the particle indices that hold them.
    pub fn unique_trees(&self) -> Vec<(&Tree, Vec<usize>)> {
        let roots: Vec<&Node> = self.particles.iter().map(|p| p.root()).collect();
        let (unique, slot) = dedupe(&roots);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); unique.len()];
        for (i, s) in slot.into_iter().enumerate() {
            groups[s].push(i);
        }
        let mut first: Vec<usize> = groups.iter().map(|g| g[0]).collect();
        first.sort_unstable();
        groups.sort_by_key(|g| g[0]);
        first.into_iter().zip(groups).map(|(i, g)| (&self.particles[i], g)).collect()
    }

    /// Consume one observation.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<StepInfo> {
        if x.len() != self.data.dim() {
            return Err(Error::LengthMismatch { left: x.len(), right: self.data.dim() });
        }
        if !y.is_finite() {
            return Err(Error::Data { row: self.data.len(), message: format!("response {y} is not finite") });
        }
        if let LeafModel::Multinomial { classes } = self.config.model {
            if y < 0.0 || y.fract() != 0.0 || y as usize >= classes {
                return Err(Error::Data { row: self.data.len(), message: format!("class label {y} out of range") });
            }
        }
        let step = self.data.len() as u64;
        let logw = self.log_predictive(x, y);
        let lmp = log_mean_exp(&logw);
        let degenerate = !lmp.is_finite();
        let ancestors = resample(&logw, self.config.seed, step);
        self.data.push(x, y)?;
        let resampled: Vec<Tree> = ancestors.iter().map(|&a| self.particles[a].clone()).collect();
        self.particles = propagate::propagate_all(&resampled, &self.context(), self.config.seed, step)?;
        self.trace.push(lmp);
        if degenerate {
            self.degenerate_steps.push(step as usize);
        }
        Ok(StepInfo { log_mean_predictive: lmp, degenerate })
    }
}

fn check_labels(model: &LeafModel, data: &Observations) -> Result<()> {
    for (i, &y) in data.responses().iter().enumerate() {
        let ok = match model {
            LeafModel::Multinomial { classes } => y >= 0.0 && y.fract() == 0.0 && (y as usize) < *classes,
            _ => y.is_finite(),
        };
        if !ok {
            return Err(Error::Data { row: i, message: format!("invalid response {y}") });
        }
    }
    Ok(())
}

/// Group equal `Arc`-backed nodes by address; returns the distinct nodes in
/// first-seen order and, for each input, its group.
pub(crate) fn dedupe<'a>(nodes: &[&'a Node]) -> (Vec<&'a Node>, Vec<usize>) {
    let mut map: HashMap<*const Node, usize> = HashMap::with_capacity(nodes.len());
    let mut unique = Vec::new();
    let slot = nodes
        .iter()
        .map(|&n| {
            *map.entry(n as *const Node).or_insert_with(|| {
                unique.push(n);
                unique.len() - 1
            })
        })
        .collect();
    (unique, slot)
}

/// Multinomial resampling; uniform when every weight is zero.
fn resample(logw: &[f64], seed: u64, step: u64) -> Vec<usize> {
    let n = logw.len();
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &l in logw {
        acc += if mx.is_finite() { (l - mx).exp() } else { 1.0 };
        cdf.push(acc);
    }
    let mut rng = stream(seed, Stream::Resample, step, 0);
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(n - 1)
        })
        .collect()
}

/// Cumulative log Bayes factor of one model over another on the same data order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorTrace {
    pub t_init: usize,
    pub log_bf: Vec<f64>,
}

impl BayesFactorTrace {
    pub fn final_log_bf(&self) -> f64 {
        self.log_bf.last().copied().unwrap_or(0.0)
    }
}

/// `a` over `b` (the null), accumulated step by step.
pub fn bayes_factor(a: &ParticleCloud, b: &ParticleCloud) -> Result<BayesFactorTrace> {
    if a.trace.len() != b.trace.len() || a.t_init != b.t_init {
        return Err(Error::LengthMismatch { left: a.trace.len(), right: b.trace.len() });
    }
    let mut acc = 0.0;
    let log_bf = a
        .trace
        .iter()
        .zip(&b.trace)
        .map(|(x, y)| {
            acc += x - y;
            acc
        })
        .collect();
    Ok(BayesFactorTrace { t_init: a.t_init, log_bf })
}

/// Seed of repetition `rep`.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, &[Stream::Repetition as u64, rep as u64])
}

/// Shuffled row order of repetition `rep`.
pub fn repetition_order(n: usize, seed: u64, rep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Stream::Shuffle, rep as u64, 0));
    order
}

/// `reps` independent filters, each on its own shuffled order and seed.
pub fn run_repetitions(data: &Observations, config: &CloudConfig, reps: usize) -> Result<Vec<ParticleCloud>> {
    if reps == 0 {
        return Err(Error::config("at least one repetition is required"));
    }
    (0..reps)
        .map(|r| {
            let order = repetition_order(data.len(), config.seed, r);
            let cfg = config.clone().with_seed(repetition_seed(config.seed, r));
            ParticleCloud::fit(&data.subset(&order), cfg)
        })
        .collect()
}

impl ParticleCloud {
    /// True when particles `i` and `j` hold the same tree value.
    pub fn shares_tree(&self, i: usize, j: usize) -> bool {
        Arc::ptr_eq(self.particles[i].root_arc(), self.particles[j].root_arc())
    }
}
