//! Forward simulation of split counts under the tree prior.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Stream, StreamRng};
use crate::tree::TreePrior;

/// Prior split statistics by sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSimReport {
    pub sizes: Vec<usize>,
    /// `[size][dim]` mean number of splits on the dimension.
    pub mean_splits: Vec<Vec<f64>>,
    /// `[size][dim]` probability of at least one split on the dimension.
    pub p_any: Vec<Vec<f64>>,
}

impl PriorSimReport {
    /// Dimension-averaged curves `(mean splits, P(≥ 1 split))`.
    pub fn averaged(&self) -> Vec<(usize, f64, f64)> {
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        self.sizes
            .iter()
            .zip(self.mean_splits.iter().zip(&self.p_any))
            .map(|(&t, (m, p))| (t, avg(m), avg(p)))
            .collect()
    }
}

/// For each size `t`, draw `reps` designs of `t` rows from `sampler` and
/// forward-sample a tree on each: a node splits with probability
/// `p_split(depth)` when any split leaves `min_leaf` points per side, on a
/// dimension drawn uniformly from those admitting one, at a threshold drawn
/// uniformly from that dimension's candidates.
pub fn prior_split_simulation(
    sizes: &[usize],
    dim: usize,
    prior: &TreePrior,
    min_leaf: usize,
    reps: usize,
    seed: u64,
    sampler: &(dyn Fn(&mut StreamRng) -> Vec<f64> + Sync),
) -> PriorSimReport {
    let per_size: Vec<(Vec<f64>, Vec<f64>)> = sizes
        .iter()
        .enumerate()
        .map(|(si, &t)| {
            let counts: Vec<Vec<usize>> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(seed, Stream::PriorSim, si as u64, r as u64);
                    let rows: Vec<Vec<f64>> = (0..t).map(|_| sampler(&mut rng)).collect();
                    let mut c = vec![0usize; dim];
                    split_rec((0..t).collect(), 0, &rows, prior, min_leaf.max(1), &mut rng, &mut c);
                    c
                })
                .collect();
            let r = reps.max(1) as f64;
            let mean = (0..dim).map(|d| counts.iter().map(|c| c[d] as f64).sum::<f64>() / r).collect();
            let any = (0..dim).map(|d| counts.iter().filter(|c| c[d] > 0).count() as f64 / r).collect();
            (mean, any)
        })
        .collect();
    let (mean_splits, p_any) = per_size.into_iter().unzip();
    PriorSimReport { sizes: sizes.to_vec(), mean_splits, p_any }
}

fn split_rec(
    idx: Vec<usize>,
    depth: usize,
    rows: &[Vec<f64>],
    prior: &TreePrior,
    min: usize,
    rng: &mut StreamRng,
    counts: &mut [usize],
) {
    let n = idx.len();
    if n < 2 * min {
        return;
    }
    // Candidate thresholds per dimension.
    let mut cands: Vec<(usize, Vec<f64>)> = Vec::new();
    for d in 0..counts.len() {
        let mut v: Vec<f64> = idx.iter().map(|&i| rows[i][d]).collect();
        v.sort_unstable_by(f64::total_cmp);
        let th: Vec<f64> = (min..=n - min)
            .filter(|&k| v[k - 1] < v[k])
            .map(|k| 0.5 * (v[k - 1] + v[k]))
            .collect();
        if !th.is_empty() {
            cands.push((d, th));
        }
    }
    if cands.is_empty() || rng.random::<f64>() >= prior.p_split(depth) {
        return;
    }
    let (d, th) = &cands[rng.random_range(0..cands.len())];
    let t = th[rng.random_range(0..th.len())];
    counts[*d] += 1;
    let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| rows[i][*d] <= t);
    split_rec(l, depth + 1, rows, prior, min, rng, counts);
    split_rec(r, depth + 1, rows, prior, min, rng, counts);
}
