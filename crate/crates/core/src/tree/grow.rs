//! Candidate split enumeration with prefix/suffix marginal sweeps.

use serde::{Deserialize, Serialize};

use super::{SplitRule, TreeContext};

/// A valid grow move on a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowMove {
    pub rule: SplitRule,
    pub left_count: usize,
    pub right_count: usize,
}

/// Candidate split together with the children's log marginals (zero when
/// scoring was not requested).
#[derive(Clone, Copy, Debug)]
pub(crate) struct ScoredSplit {
    pub rule: SplitRule,
    pub left_count: usize,
    pub left_lm: f64,
    pub right_lm: f64,
}

/// All midpoint splits of `points` leaving at least the minimum leaf size on
/// each side, ordered by dimension then threshold. With `score`, each
/// candidate carries child marginals from one forward and one backward sweep;
/// linear candidates whose child Gram matrix needs jitter are dropped.
pub(crate) fn scan_splits(points: &[u32], ctx: &TreeContext, score: bool) -> Vec<ScoredSplit> {
    scan_sorted(&super::sort_by_dim(points, ctx.data), ctx, score)
}

/// [`scan_splits`] over precomputed per-dimension orders by `(value, index)`.
pub(crate) fn scan_sorted(orders: &[Vec<u32>], ctx: &TreeContext, score: bool) -> Vec<ScoredSplit> {
    let n = orders.first().map_or(0, Vec::len);
    let min = ctx.min_leaf().max(1);
    let mut out = Vec::new();
    if n < 2 * min {
        return out;
    }
    let data = ctx.data;
    let mut order: Vec<(f64, u32)> = Vec::with_capacity(n);
    // cut positions k: left = order[..k]
    let mut cuts: Vec<(usize, f64)> = Vec::new();
    let mut fwd: Vec<f64> = Vec::new();
    let mut bwd: Vec<f64> = Vec::new();
    let mut fwd_ok: Vec<bool> = Vec::new();
    let mut bwd_ok: Vec<bool> = Vec::new();
    for dim in 0..data.dim() {
        order.clear();
        order.extend(orders[dim].iter().map(|&i| (data.value(i as usize, dim), i)));
        cuts.clear();
        for k in min..=(n - min) {
            let (a, b) = (order[k - 1].0, order[k].0);
            if a < b {
                let mid = 0.5 * (a + b);
                if a < mid && mid < b {
                    cuts.push((k, mid));
                }
            }
        }
        if cuts.is_empty() {
            continue;
        }
        if !score {
            out.extend(cuts.iter().map(|&(k, t)| ScoredSplit {
                rule: SplitRule { dim, threshold: t },
                left_count: k,
                left_lm: 0.0,
                right_lm: 0.0,
            }));
            continue;
        }
        fwd.clear();
        fwd_ok.clear();
        let mut s = ctx.model.empty_stats();
        let mut next = 0;
        for (k, &(_, i)) in order.iter().enumerate() {
            if next == cuts.len() {
                break;
            }
            let iu = i as usize;
            ctx.model.push(&mut s, data.row(iu), data.response(iu));
            if k + 1 == cuts[next].0 {
                let (lm, ok) = marginal(ctx, &s);
                fwd.push(lm);
                fwd_ok.push(ok);
                next += 1;
            }
        }
        bwd.clear();
        bwd_ok.clear();
        bwd.resize(cuts.len(), 0.0);
        bwd_ok.resize(cuts.len(), false);
        let mut s = ctx.model.empty_stats();
        let mut next = cuts.len();
        for k in (0..n).rev() {
            if next == 0 {
                break;
            }
            let iu = order[k].1 as usize;
            ctx.model.push(&mut s, data.row(iu), data.response(iu));
            if k == cuts[next - 1].0 {
                let (lm, ok) = marginal(ctx, &s);
                bwd[next - 1] = lm;
                bwd_ok[next - 1] = ok;
                next -= 1;
            }
        }
        for (c, &(k, t)) in cuts.iter().enumerate() {
            if fwd_ok[c] && bwd_ok[c] {
                out.push(ScoredSplit {
                    rule: SplitRule { dim, threshold: t },
                    left_count: k,
                    left_lm: fwd[c],
                    right_lm: bwd[c],
                });
            }
        }
    }
    out
}

fn marginal(ctx: &TreeContext, s: &crate::leaf::LeafSuffStats) -> (f64, bool) {
    match ctx.model.log_marginal_flagged(s) {
        Ok((m, jittered)) if m.is_finite() => (m, !jittered),
        _ => (f64::NEG_INFINITY, false),
    }
}

/// Uniform split-rule prior over `splits` (as returned by [`scan_splits`]):
/// a dimension uniformly among those with candidates, then a threshold
/// uniformly on it.
pub(crate) fn rule_log_probs(splits: &[ScoredSplit]) -> Vec<f64> {
    let mut per_dim: Vec<(usize, usize)> = Vec::new();
    for s in splits {
        match per_dim.last_mut() {
            Some((d, c)) if *d == s.rule.dim => *c += 1,
            _ => per_dim.push((s.rule.dim, 1)),
        }
    }
    let ln_dims = (per_dim.len() as f64).ln();
    let mut out = Vec::with_capacity(splits.len());
    for &(_, c) in &per_dim {
        let lp = -ln_dims - (c as f64).ln();
        out.extend(std::iter::repeat_n(lp, c));
    }
    out
}
