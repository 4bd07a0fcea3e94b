//! Persistent binary trees over axis-aligned partitions.
//!
//! Nodes are shared between particles through `Arc`; every modification
//! copies only the root-to-node path. Each node carries the sufficient
//! statistics of all points beneath it, so pruning is exact and O(1) in the
//! statistics, plus cached subtree log-prior and log-likelihood totals.

mod grow;
mod prior;
mod rect;

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::data::Observations;
use crate::error::{Error, Result};
use crate::leaf::{LeafFit, LeafModel, LeafSuffStats};

pub use grow::GrowMove;
pub(crate) use grow::{rule_log_probs, scan_sorted, scan_splits};
pub use prior::TreePrior;
pub use rect::Rect;

/// Split on `dim`: points with `x[dim] <= threshold` go left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub dim: usize,
    pub threshold: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.dim] <= self.threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Root-to-node path; the root is the empty path.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(Vec<Side>);

impl NodeId {
    pub fn root() -> Self {
        NodeId(Vec::new())
    }

    pub fn from_path(path: Vec<Side>) -> Self {
        NodeId(path)
    }

    pub fn path(&self) -> &[Side] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, side: Side) -> Self {
        let mut p = self.0.clone();
        p.push(side);
        NodeId(p)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            None
        } else {
            Some(NodeId(self.0[..self.0.len() - 1].to_vec()))
        }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("root")?;
        for s in &self.0 {
            f.write_str(match s {
                Side::Left => ".L",
                Side::Right => ".R",
            })?;
        }
        Ok(())
    }
}

/// Everything tree construction needs besides the tree itself.
#[derive(Clone, Copy)]
pub struct TreeContext<'a> {
    pub model: &'a LeafModel,
    pub prior: &'a TreePrior,
    pub data: &'a Observations,
}

impl TreeContext<'_> {
    pub fn min_leaf(&self) -> usize {
        self.prior.min_leaf_size(self.model)
    }

    pub(crate) fn stats_of(&self, points: &[u32]) -> LeafSuffStats {
        let mut s = self.model.empty_stats();
        for &i in points {
            let i = i as usize;
            self.model.push(&mut s, self.data.row(i), self.data.response(i));
        }
        s
    }
}

/// Per-dimension orderings of a leaf's points by `(value, index)`, filled on
/// first use and carried through insertions and splits. Ignored by equality
/// and serialization.
#[derive(Clone, Default)]
pub struct SortedOrders(OnceLock<Arc<Vec<Vec<u32>>>>);

impl PartialEq for SortedOrders {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl std::fmt::Debug for SortedOrders {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.0.get().is_some() { "SortedOrders(cached)" } else { "SortedOrders" })
    }
}

impl SortedOrders {
    fn filled(orders: Vec<Vec<u32>>) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(Arc::new(orders));
        SortedOrders(cell)
    }
}

fn sort_by_dim(points: &[u32], data: &Observations) -> Vec<Vec<u32>> {
    (0..data.dim())
        .map(|dim| {
            let mut o = points.to_vec();
            o.sort_unstable_by(|&a, &b| {
                data.value(a as usize, dim).total_cmp(&data.value(b as usize, dim)).then(a.cmp(&b))
            });
            o
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf {
        points: Vec<u32>,
        fit: LeafFit,
        #[serde(skip)]
        orders: SortedOrders,
    },
    Internal { rule: SplitRule, left: Arc<Node>, right: Arc<Node> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    depth: u32,
    /// Statistics of every point in the subtree.
    stats: LeafSuffStats,
    /// Log probability of this node's split rule at the time it was grown.
    #[serde(default)]
    rule_log_prior: f64,
    subtree_log_prior: f64,
    subtree_log_lik: f64,
    n_leaves: u32,
    kind: NodeKind,
}

impl Node {
    pub(crate) fn leaf(depth: usize, points: Vec<u32>, stats: LeafSuffStats, ctx: &TreeContext) -> Result<Node> {
        let fit = ctx.model.fit(&stats)?;
        Ok(Node {
            depth: depth as u32,
            stats,
            rule_log_prior: 0.0,
            subtree_log_prior: ctx.prior.log_stay(depth),
            subtree_log_lik: fit.log_marginal(),
            n_leaves: 1,
            kind: NodeKind::Leaf { points, fit, orders: SortedOrders::default() },
        })
    }

    pub(crate) fn internal(
        depth: usize,
        rule: SplitRule,
        rule_log_prior: f64,
        left: Arc<Node>,
        right: Arc<Node>,
        stats: LeafSuffStats,
        prior: &TreePrior,
    ) -> Node {
        Node {
            depth: depth as u32,
            stats,
            rule_log_prior,
            subtree_log_prior: prior.log_split(depth)
                + rule_log_prior
                + left.subtree_log_prior
                + right.subtree_log_prior,
            subtree_log_lik: left.subtree_log_lik + right.subtree_log_lik,
            n_leaves: left.n_leaves + right.n_leaves,
            kind: NodeKind::Internal { rule, left, right },
        }
    }

    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    pub fn stats(&self) -> &LeafSuffStats {
        &self.stats
    }

    pub fn kind(&self) -> &NodeKind {
        &self.kind
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn n(&self) -> usize {
        self.stats.n()
    }

    pub fn rule(&self) -> Option<&SplitRule> {
        match &self.kind {
            NodeKind::Internal { rule, .. } => Some(rule),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn children(&self) -> Option<(&Node, &Node)> {
        match &self.kind {
            NodeKind::Internal { left, right, .. } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn fit(&self) -> Option<&LeafFit> {
        match &self.kind {
            NodeKind::Leaf { fit, .. } => Some(fit),
            NodeKind::Internal { .. } => None,
        }
    }

    /// Point indices of a leaf, ascending.
    pub fn points(&self) -> Option<&[u32]> {
        match &self.kind {
            NodeKind::Leaf { points, .. } => Some(points),
            NodeKind::Internal { .. } => None,
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.n_leaves as usize
    }

    /// Per-dimension sorted point orders of a leaf, computed on first call.
    pub(crate) fn sorted_orders(&self, data: &Observations) -> Option<&[Vec<u32>]> {
        match &self.kind {
            NodeKind::Leaf { points, orders, .. } => Some(orders.0.get_or_init(|| Arc::new(sort_by_dim(points, data)))),
            NodeKind::Internal { .. } => None,
        }
    }

    fn cached_orders(&self) -> Option<&[Vec<u32>]> {
        match &self.kind {
            NodeKind::Leaf { orders, .. } => orders.0.get().map(|o| o.as_slice()),
            NodeKind::Internal { .. } => None,
        }
    }

    fn set_orders(&mut self, new: Vec<Vec<u32>>) {
        if let NodeKind::Leaf { orders, .. } = &mut self.kind {
            *orders = SortedOrders::filled(new);
        }
    }

    pub fn rule_log_prior(&self) -> f64 {
        self.rule_log_prior
    }

    /// Structural log prior of the subtree including split-rule terms.
    pub fn subtree_log_prior(&self) -> f64 {
        self.subtree_log_prior
    }

    /// Sum of leaf log marginals in the subtree.
    pub fn subtree_log_lik(&self) -> f64 {
        self.subtree_log_lik
    }

    /// All point indices under this node, ascending.
    pub fn collect_points(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.n());
        fn walk(n: &Node, out: &mut Vec<u32>) {
            match &n.kind {
                NodeKind::Leaf { points, .. } => out.extend_from_slice(points),
                NodeKind::Internal { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(self, &mut out);
        out.sort_unstable();
        out
    }

    fn child(&self, side: Side) -> Option<&Node> {
        self.children().map(|(l, r)| match side {
            Side::Left => l,
            Side::Right => r,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    root: Arc<Node>,
}

impl Tree {
    /// Single-leaf tree over `points` (indices into `ctx.data`).
    pub fn single_leaf(mut points: Vec<u32>, ctx: &TreeContext) -> Result<Tree> {
        points.sort_unstable();
        let stats = ctx.stats_of(&points);
        Ok(Tree { root: Arc::new(Node::leaf(0, points, stats, ctx)?) })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub(crate) fn root_arc(&self) -> &Arc<Node> {
        &self.root
    }

    #[cfg(test)]
    pub(crate) fn from_root(root: Arc<Node>) -> Tree {
        Tree { root }
    }

    pub fn same_as(&self, other: &Tree) -> bool {
        Arc::ptr_eq(&self.root, &other.root)
    }

    pub fn num_leaves(&self) -> usize {
        self.root.num_leaves()
    }

    pub fn num_points(&self) -> usize {
        self.root.n()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        id.path().iter().try_fold(&*self.root, |n, &s| n.child(s))
    }

    /// Unique leaf containing `x`; out-of-support inputs route like their
    /// clamped image since thresholds lie inside the support.
    pub fn leaf_for(&self, x: &[f64]) -> NodeId {
        let mut path = Vec::new();
        let mut n = &*self.root;
        while let NodeKind::Internal { rule, left, right } = &n.kind {
            if rule.goes_left(x) {
                path.push(Side::Left);
                n = left;
            } else {
                path.push(Side::Right);
                n = right;
            }
        }
        NodeId(path)
    }

    pub fn leaf_node_for(&self, x: &[f64]) -> &Node {
        let mut n = &*self.root;
        while let NodeKind::Internal { rule, left, right } = &n.kind {
            n = if rule.goes_left(x) { left } else { right };
        }
        n
    }

    /// Position of the leaf containing `x` in depth-first (left-first) order.
    pub fn leaf_ordinal(&self, x: &[f64]) -> usize {
        let mut n = &*self.root;
        let mut ord = 0;
        while let NodeKind::Internal { rule, left, right } = &n.kind {
            if rule.goes_left(x) {
                n = left;
            } else {
                ord += left.num_leaves();
                n = right;
            }
        }
        ord
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<(NodeId, &Node)> {
        let mut out = Vec::with_capacity(self.num_leaves());
        self.walk(|id, n| {
            if n.is_leaf() {
                out.push((id.clone(), n));
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, mut f: impl FnMut(&NodeId, &'a Node)) {
        fn rec<'a>(n: &'a Node, id: &mut Vec<Side>, f: &mut impl FnMut(&NodeId, &'a Node)) {
            let nid = NodeId(id.clone());
            f(&nid, n);
            if let NodeKind::Internal { left, right, .. } = &n.kind {
                id.push(Side::Left);
                rec(left, id, f);
                id.pop();
                id.push(Side::Right);
                rec(right, id, f);
                id.pop();
            }
        }
        rec(&self.root, &mut Vec::new(), &mut f);
    }

    /// Pre-order traversal carrying each node's bounding box inside `support`.
    pub fn walk_boxes<'a>(&'a self, support: &Rect, mut f: impl FnMut(&'a Node, &Rect)) {
        fn rec<'a>(n: &'a Node, b: &Rect, f: &mut impl FnMut(&'a Node, &Rect)) {
            f(n, b);
            if let NodeKind::Internal { rule, left, right } = &n.kind {
                let (bl, br) = b.split(rule);
                rec(left, &bl, f);
                rec(right, &br, f);
            }
        }
        rec(&self.root, support, &mut f);
    }

    pub fn node_box(&self, id: &NodeId, support: &Rect) -> Option<Rect> {
        let mut b = support.clone();
        let mut n = &*self.root;
        for &s in id.path() {
            let NodeKind::Internal { rule, left, right } = &n.kind else { return None };
            let (bl, br) = b.split(rule);
            (n, b) = match s {
                Side::Left => (left, bl),
                Side::Right => (right, br),
            };
        }
        Some(b)
    }

    /// Number of internal nodes splitting on each of `dim` predictors.
    pub fn split_counts(&self, dim: usize) -> Vec<usize> {
        let mut c = vec![0; dim];
        self.walk(|_, n| {
            if let Some(r) = n.rule() {
                c[r.dim] += 1;
            }
        });
        c
    }

    pub fn max_depth(&self) -> usize {
        let mut d = 0;
        self.walk(|_, n| d = d.max(n.depth()));
        d
    }

    /// Unnormalised log prior Σ_internal log p_split + Σ_leaves log(1 - p_split).
    pub fn log_prior(&self, prior: &TreePrior) -> f64 {
        let mut total = 0.0;
        self.walk(|_, n| total += if n.is_leaf() { prior.log_stay(n.depth()) } else { prior.log_split(n.depth()) });
        total
    }

    /// `log_prior` plus the stored split-rule log probabilities.
    pub fn log_prior_with_rules(&self, prior: &TreePrior) -> f64 {
        let mut rules = 0.0;
        self.walk(|_, n| rules += n.rule_log_prior);
        self.log_prior(prior) + rules
    }

    /// Σ leaf log marginal likelihoods.
    pub fn log_likelihood(&self) -> f64 {
        self.root.subtree_log_lik
    }

    /// Candidate splits of a leaf, midway between consecutive distinct values,
    /// leaving at least the minimum leaf size on both sides.
    pub fn enumerate_grow_moves(&self, leaf: &NodeId, ctx: &TreeContext) -> Result<Vec<GrowMove>> {
        let node = self.node(leaf).ok_or_else(|| Error::InvalidMove(format!("no node {leaf}")))?;
        let points = node.points().ok_or_else(|| Error::InvalidMove(format!("{leaf} is not a leaf")))?;
        Ok(scan_splits(points, ctx, false)
            .into_iter()
            .map(|s| GrowMove { rule: s.rule, left_count: s.left_count, right_count: points.len() - s.left_count })
            .collect())
    }

    /// Replace the node at `path` by `replacement`, copying the ancestors and
    /// (optionally) pushing point `add` into each ancestor's statistics.
    pub(crate) fn rebuild(&self, path: &[Side], replacement: Node, add: Option<u32>, ctx: &TreeContext) -> Tree {
        fn rec(n: &Node, path: &[Side], replacement: Node, add: Option<u32>, ctx: &TreeContext) -> Node {
            let Some((&side, rest)) = path.split_first() else { return replacement };
            let NodeKind::Internal { rule, left, right } = &n.kind else {
                unreachable!("path descends through a leaf")
            };
            let (l, r) = match side {
                Side::Left => (Arc::new(rec(left, rest, replacement, add, ctx)), right.clone()),
                Side::Right => (left.clone(), Arc::new(rec(right, rest, replacement, add, ctx))),
            };
            let mut stats = n.stats.clone();
            if let Some(k) = add {
                let k = k as usize;
                ctx.model.push(&mut stats, ctx.data.row(k), ctx.data.response(k));
            }
            Node::internal(n.depth(), *rule, n.rule_log_prior, l, r, stats, ctx.prior)
        }
        Tree { root: Arc::new(rec(&self.root, path, replacement, add, ctx)) }
    }

    /// Leaf node with point `k` appended.
    pub(crate) fn leaf_with_point(node: &Node, k: u32, ctx: &TreeContext) -> Result<Node> {
        let NodeKind::Leaf { points, .. } = &node.kind else {
            return Err(Error::InvalidMove("point insertion into an internal node".into()));
        };
        let mut pts = Vec::with_capacity(points.len() + 1);
        pts.extend_from_slice(points);
        pts.push(k);
        let mut stats = node.stats.clone();
        let ku = k as usize;
        ctx.model.push(&mut stats, ctx.data.row(ku), ctx.data.response(ku));
        let mut out = Node::leaf(node.depth(), pts, stats, ctx)?;
        if let Some(old) = node.cached_orders() {
            let x = ctx.data.row(ku);
            // k exceeds every stored index, so it goes after all equal values
            let orders = old
                .iter()
                .enumerate()
                .map(|(dim, o)| {
                    let at = o.partition_point(|&i| ctx.data.value(i as usize, dim).total_cmp(&x[dim]).is_le());
                    let mut v = Vec::with_capacity(o.len() + 1);
                    v.extend_from_slice(&o[..at]);
                    v.push(k);
                    v.extend_from_slice(&o[at..]);
                    v
                })
                .collect();
            out.set_orders(orders);
        }
        Ok(out)
    }

    /// Split a leaf into two children; the leaf's statistics become the
    /// internal node's aggregate unchanged.
    pub(crate) fn grown_node(node: &Node, rule: SplitRule, rule_log_prior: f64, ctx: &TreeContext) -> Result<Node> {
        let NodeKind::Leaf { points, .. } = &node.kind else {
            return Err(Error::InvalidMove("grow on an internal node".into()));
        };
        let (lp, rp): (Vec<u32>, Vec<u32>) =
            points.iter().partition(|&&i| rule.goes_left(ctx.data.row(i as usize)));
        let min = ctx.min_leaf();
        if lp.len() < min || rp.len() < min {
            return Err(Error::InvalidMove(format!(
                "split leaves {}/{} points, minimum leaf size is {min}",
                lp.len(),
                rp.len()
            )));
        }
        let d = node.depth() + 1;
        let (ls, rs) = (ctx.stats_of(&lp), ctx.stats_of(&rp));
        let mut left = Node::leaf(d, lp, ls, ctx)?;
        let mut right = Node::leaf(d, rp, rs, ctx)?;
        if let Some(orders) = node.cached_orders() {
            let (lo, ro): (Vec<_>, Vec<_>) = orders
                .iter()
                .map(|o| o.iter().partition::<Vec<u32>, _>(|&&i| rule.goes_left(ctx.data.row(i as usize))))
                .unzip();
            left.set_orders(lo);
            right.set_orders(ro);
        }
        let (left, right) = (Arc::new(left), Arc::new(right));
        Ok(Node::internal(node.depth(), rule, rule_log_prior, left, right, node.stats.clone(), ctx.prior))
    }

    /// Collapse an internal node into a leaf holding all of its points.
    pub(crate) fn pruned_node(node: &Node, ctx: &TreeContext) -> Result<Node> {
        if node.is_leaf() {
            return Err(Error::InvalidMove("prune of a leaf".into()));
        }
        Node::leaf(node.depth(), node.collect_points(), node.stats.clone(), ctx)
    }

    /// Grow `leaf` with `rule`.
    pub fn apply_grow(&self, leaf: &NodeId, rule: SplitRule, ctx: &TreeContext) -> Result<Tree> {
        let node = self.node(leaf).ok_or_else(|| Error::InvalidMove(format!("no node {leaf}")))?;
        let rule_lp = match node.points() {
            Some(points) if ctx.prior.rule_prior => {
                let splits = scan_splits(points, ctx, false);
                rule_log_probs(&splits)
                    .into_iter()
                    .zip(&splits)
                    .find(|(_, s)| s.rule.dim == rule.dim)
                    .map_or(0.0, |(lp, _)| lp)
            }
            _ => 0.0,
        };
        let grown = Self::grown_node(node, rule, rule_lp, ctx)?;
        Ok(self.rebuild(leaf.path(), grown, None, ctx))
    }

    /// Collapse the parent of `node` (and the sibling subtree) into one leaf.
    pub fn apply_prune(&self, node: &NodeId, ctx: &TreeContext) -> Result<Tree> {
        let parent = node.parent().ok_or_else(|| Error::InvalidMove("the root has no parent to prune".into()))?;
        let p = self.node(&parent).ok_or_else(|| Error::InvalidMove(format!("no node {parent}")))?;
        if self.node(node).is_none() {
            return Err(Error::InvalidMove(format!("no node {node}")));
        }
        let pruned = Self::pruned_node(p, ctx)?;
        Ok(self.rebuild(parent.path(), pruned, None, ctx))
    }

    /// Append point `k` to the leaf containing it (the "stay" move).
    pub fn insert(&self, k: u32, ctx: &TreeContext) -> Result<Tree> {
        let id = self.leaf_for(ctx.data.row(k as usize));
        let leaf = Self::leaf_with_point(self.node(&id).expect("routed leaf exists"), k, ctx)?;
        Ok(self.rebuild(id.path(), leaf, Some(k), ctx))
    }

    /// Structural check: routing, thresholds inside boxes, statistics
    /// conservation and cached totals. Intended for tests and diagnostics.
    pub fn check_invariants(&self, ctx: &TreeContext, support: &Rect, tol: f64) -> Result<()> {
        let bad = |m: String| Err(Error::Numerical(m));
        let mut err = None;
        self.walk_boxes(support, |n, b| {
            if err.is_some() {
                return;
            }
            let pts = n.collect_points();
            let direct = ctx.stats_of(&pts);
            if direct.n() != n.n() {
                err = Some(format!("count mismatch {} vs {}", direct.n(), n.n()));
                return;
            }
            let close = |a: f64, c: f64| (a - c).abs() <= tol * (1.0 + a.abs().max(c.abs()));
            if !close(direct.sum_y(), n.stats.sum_y()) || !close(direct.sum_y2(), n.stats.sum_y2()) {
                err = Some("statistics differ from recomputation".to_string());
                return;
            }
            for &i in &pts {
                if !b.contains(ctx.data.row(i as usize)) {
                    err = Some(format!("point {i} outside its node box"));
                    return;
                }
            }
            match &n.kind {
                NodeKind::Internal { rule, left, right } => {
                    if !(b.lo[rule.dim] < rule.threshold && rule.threshold < b.hi[rule.dim]) {
                        err = Some(format!("threshold {} outside box on dim {}", rule.threshold, rule.dim));
                    }
                    if left.depth() != n.depth() + 1 || right.depth() != n.depth() + 1 {
                        err = Some("child depth".to_string());
                    }
                }
                NodeKind::Leaf { points, .. } => {
                    if points.len() < ctx.min_leaf().min(self.num_points()) {
                        err = Some(format!("leaf below minimum size: {}", points.len()));
                    }
                }
            }
        });
        if let Some(m) = err {
            return bad(m);
        }
        let lp = self.log_prior_with_rules(ctx.prior);
        if (lp - self.root.subtree_log_prior).abs() > 1e-9 * (1.0 + lp.abs()) {
            return bad(format!("cached log prior {} vs {lp}", self.root.subtree_log_prior));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
