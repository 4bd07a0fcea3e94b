//! Conditional-posterior propagation over {stay, prune, grow}.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dedupe;
use crate::error::Result;
use crate::rng::{stream, Stream};
use crate::tree::{rule_log_probs, scan_sorted, Node, NodeId, SplitRule, Tree, TreeContext};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Move {
    Stay,
    /// Collapse the parent of the new point's leaf.
    Prune,
    Grow(SplitRule),
}

/// Move distribution shared by all particles with the same parent of η(x).
struct MoveDist {
    /// Target leaf with the new point deposited.
    leaf_plus: Node,
    moves: Vec<Move>,
    /// Split-rule log prior of each move (zero except for grows).
    rule_lp: Vec<f64>,
    cdf: Vec<f64>,
}

impl MoveDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("stay is always present");
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

fn move_dist(leaf: &Node, parent: Option<&Node>, ctx: &TreeContext) -> Result<MoveDist> {
    let k = (ctx.data.len() - 1) as u32;
    let (x, y) = (ctx.data.row(k as usize), ctx.data.response(k as usize));
    let leaf_plus = Tree::leaf_with_point(leaf, k, ctx)?;
    let m_plus = leaf_plus.subtree_log_lik();
    let mut moves = vec![Move::Stay];
    let mut logw = vec![0.0];
    let mut rule_lp = vec![0.0];

    if let Some(p) = parent {
        let mut ps = p.stats().clone();
        ctx.model.push(&mut ps, x, y);
        if let Ok(mp) = ctx.model.log_marginal(&ps) {
            let stay = p.subtree_log_prior() + p.subtree_log_lik() - leaf.subtree_log_lik() + m_plus;
            let w = ctx.prior.log_stay(p.depth()) + mp - stay;
            if !w.is_nan() && w > f64::NEG_INFINITY {
                moves.push(Move::Prune);
                logw.push(w);
                rule_lp.push(0.0);
            }
        }
    }

    let d = leaf.depth();
    let grow_prior = ctx.prior.log_split(d) + 2.0 * ctx.prior.log_stay(d + 1) - ctx.prior.log_stay(d);
    if grow_prior > f64::NEG_INFINITY {
        let orders = leaf_plus.sorted_orders(ctx.data).expect("leaf");
        let splits = scan_sorted(orders, ctx, true);
        let rules =
            if ctx.prior.rule_prior { rule_log_probs(&splits) } else { vec![0.0; splits.len()] };
        for (s, r) in splits.iter().zip(rules) {
            let w = grow_prior + r + s.left_lm + s.right_lm - m_plus;
            if w > f64::NEG_INFINITY {
                moves.push(Move::Grow(s.rule));
                logw.push(w);
                rule_lp.push(r);
            }
        }
    }

    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    let cdf = logw
        .iter()
        .map(|&l| {
            acc += (l - mx).exp();
            acc
        })
        .collect();
    Ok(MoveDist { leaf_plus, moves, rule_lp, cdf })
}

fn apply(tree: &Tree, leaf: &NodeId, choice: usize, dist: &MoveDist, ctx: &TreeContext) -> Result<Tree> {
    let k = (ctx.data.len() - 1) as u32;
    Ok(match dist.moves[choice] {
        Move::Stay => tree.rebuild(leaf.path(), dist.leaf_plus.clone(), Some(k), ctx),
        Move::Grow(rule) => {
            let grown = Tree::grown_node(&dist.leaf_plus, rule, dist.rule_lp[choice], ctx)?;
            tree.rebuild(leaf.path(), grown, Some(k), ctx)
        }
        Move::Prune => {
            let pid = leaf.parent().expect("prune needs a parent");
            let p = tree.node(&pid).expect("parent exists");
            let mut points = p.collect_points();
            points.push(k);
            let mut stats = p.stats().clone();
            ctx.model.push(&mut stats, ctx.data.row(k as usize), ctx.data.response(k as usize));
            let node = Node::leaf(p.depth(), points, stats, ctx)?;
            tree.rebuild(pid.path(), node, Some(k), ctx)
        }
    })
}

/// Propagate every tree by the last observation in `ctx.data` (which the
/// trees do not yet hold). Output order follows input order.
pub(crate) fn propagate_all(trees: &[Tree], ctx: &TreeContext, seed: u64, step: u64) -> Result<Vec<Tree>> {
    let k = ctx.data.len() - 1;
    let x = ctx.data.row(k);
    let ids: Vec<NodeId> = trees.iter().map(|t| t.leaf_for(x)).collect();
    let keys: Vec<&Node> = trees
        .iter()
        .zip(&ids)
        .map(|(t, id)| t.node(&id.parent().unwrap_or_else(NodeId::root)).expect("path exists"))
        .collect();
    let (unique, slot) = dedupe(&keys);
    let mut rep = vec![usize::MAX; unique.len()];
    for (i, &s) in slot.iter().enumerate() {
        if rep[s] == usize::MAX {
            rep[s] = i;
        }
    }
    let dists: Vec<MoveDist> = rep
        .par_iter()
        .map(|&i| {
            let leaf = trees[i].node(&ids[i]).expect("leaf exists");
            let parent = if ids[i].is_root() { None } else { Some(keys[i]) };
            move_dist(leaf, parent, ctx)
        })
        .collect::<Result<_>>()?;

    let choices: Vec<usize> = (0..trees.len())
        .map(|i| dists[slot[i]].sample(&mut stream(seed, Stream::Propagate, step, i as u64)))
        .collect();

    let roots: Vec<&Node> = trees.iter().map(|t| t.root()).collect();
    let mut jobs: Vec<usize> = Vec::new();
    let mut job_of: HashMap<(*const Node, usize), usize> = HashMap::new();
    let which: Vec<usize> = (0..trees.len())
        .map(|i| {
            *job_of.entry((roots[i] as *const Node, choices[i])).or_insert_with(|| {
                jobs.push(i);
                jobs.len() - 1
            })
        })
        .collect();
    let built: Vec<Tree> = jobs
        .par_iter()
        .map(|&i| {
            let d = &dists[slot[i]];
            apply(&trees[i], &ids[i], choices[i], d, ctx)
        })
        .collect::<Result<Vec<Tree>>>()?;
    // Trees reached from different parents can coincide in shape; sharing
    // one copy keeps the next step's pointer dedupe effective.
    let mut first: HashMap<Vec<u64>, usize> = HashMap::new();
    let canon: Vec<usize> = built
        .iter()
        .enumerate()
        .map(|(j, t)| *first.entry(shape(t.root())).or_insert(j))
        .collect();
    Ok(which.into_iter().map(|j| built[canon[j]].clone()).collect())
}

fn shape(root: &Node) -> Vec<u64> {
    fn walk(n: &Node, out: &mut Vec<u64>) {
        match (n.rule(), n.children()) {
            (Some(rule), Some((l, r))) => {
                out.push(rule.dim as u64);
                out.push(rule.threshold.to_bits());
                out.push(n.rule_log_prior().to_bits());
                walk(l, out);
                walk(r, out);
            }
            _ => out.push(u64::MAX),
        }
    }
    let mut out = Vec::with_capacity(4 * root.num_leaves());
    walk(root, &mut out);
    out
}
