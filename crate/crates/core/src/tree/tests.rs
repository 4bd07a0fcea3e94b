use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn data_1d(xs: &[f64]) -> Observations {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let y: Vec<f64> = xs.iter().map(|x| x * 2.0).collect();
    Observations::from_rows(&rows, &y).unwrap()
}

fn prior_min(min_leaf: usize) -> TreePrior {
    TreePrior { min_leaf, ..TreePrior::default() }
}

fn all(n: usize) -> Vec<u32> {
    (0..n as u32).collect()
}

#[test]
fn log_prior_examples() {
    let p = TreePrior::default();
    let d = data_1d(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0]);
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let t = Tree::single_leaf(all(10), &ctx).unwrap();
    assert!((t.log_prior(&p) - 0.05f64.ln()).abs() < 1e-12);
    let g = t.apply_grow(&NodeId::root(), SplitRule { dim: 0, threshold: 0.5 }, &ctx).unwrap();
    let expect = 0.95f64.ln() + 2.0 * (1.0f64 - 0.2375).ln();
    assert!((g.log_prior(&p) - expect).abs() < 1e-12);
    assert!((g.root().subtree_log_prior() - expect).abs() < 1e-12);
}

#[test]
fn zero_alpha_prior() {
    let p = TreePrior::new(0.0, 2.0).unwrap();
    let d = data_1d(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0]);
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let t = Tree::single_leaf(all(10), &ctx).unwrap();
    assert_eq!(t.log_prior(&p), 0.0);
    let g = t.apply_grow(&NodeId::root(), SplitRule { dim: 0, threshold: 0.5 }, &ctx).unwrap();
    assert_eq!(g.log_prior(&p), f64::NEG_INFINITY);
}

#[test]
fn routing_and_clamping() {
    let p = prior_min(1);
    let rows = vec![vec![0.0, 0.0], vec![0.2, 1.0], vec![0.5, 0.3], vec![1.0, 0.7]];
    let d = Observations::from_rows(&rows, &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let t = Tree::single_leaf(all(4), &ctx).unwrap();
    assert_eq!(t.leaf_for(&[0.3, 9.0]), NodeId::root());
    let g = t.apply_grow(&NodeId::root(), SplitRule { dim: 0, threshold: 0.35 }, &ctx).unwrap();
    assert_eq!(g.leaf_for(&[0.35, 0.1]), NodeId::root().child(Side::Left));
    assert_eq!(g.leaf_for(&[0.36, 0.1]), NodeId::root().child(Side::Right));
    let support = Rect::from_bounds(&d.support());
    let outside = [0.7, -5.0];
    assert_eq!(g.leaf_for(&outside), g.leaf_for(&support.clamp(&outside)));
}

#[test]
fn grow_candidates() {
    let p = prior_min(1);
    let d = data_1d(&[0.0, 1.0]);
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let t = Tree::single_leaf(all(2), &ctx).unwrap();
    let m = t.enumerate_grow_moves(&NodeId::root(), &ctx).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].rule.threshold, 0.5);
    assert_eq!((m[0].left_count, m[0].right_count), (1, 1));

    let d = data_1d(&[0.0, 0.2, 1.0]);
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let t = Tree::single_leaf(all(3), &ctx).unwrap();
    let th: Vec<f64> = t.enumerate_grow_moves(&NodeId::root(), &ctx).unwrap().iter().map(|m| m.rule.threshold).collect();
    assert_eq!(th, vec![0.1, 0.6]);

    let d = data_1d(&[0.3; 6]);
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let t = Tree::single_leaf(all(6), &ctx).unwrap();
    assert!(t.enumerate_grow_moves(&NodeId::root(), &ctx).unwrap().is_empty());
}

#[test]
fn grow_respects_minimum_leaf() {
    let p = prior_min(3);
    let d = data_1d(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let t = Tree::single_leaf(all(7), &ctx).unwrap();
    let m = t.enumerate_grow_moves(&NodeId::root(), &ctx).unwrap();
    let counts: Vec<_> = m.iter().map(|m| (m.left_count, m.right_count)).collect();
    assert_eq!(counts, vec![(3, 4), (4, 3)]);
    assert!(t.apply_grow(&NodeId::root(), SplitRule { dim: 0, threshold: 0.05 }, &ctx).is_err());
}

#[test]
fn grow_conserves_and_prune_inverts() {
    let p = prior_min(1);
    let d = data_1d(&[0.1, 0.9, 0.3, 0.7, 0.5]);
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let t = Tree::single_leaf(all(5), &ctx).unwrap();
    let g = t.apply_grow(&NodeId::root(), SplitRule { dim: 0, threshold: 0.4 }, &ctx).unwrap();
    let (l, r) = g.root().children().unwrap();
    assert_eq!((l.n(), r.n()), (2, 3));
    assert!((l.stats().sum_y() + r.stats().sum_y() - g.root().stats().sum_y()).abs() < 1e-12);
    let pr = g.apply_prune(&NodeId::root().child(Side::Right), &ctx).unwrap();
    assert_eq!(pr, t);
    assert!(matches!(t.apply_prune(&NodeId::root(), &ctx), Err(Error::InvalidMove(_))));
}

#[test]
fn merged_parent_matches_recomputation() {
    let p = prior_min(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
    let y: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 10.0).collect();
    let d = Observations::from_rows(&rows, &y).unwrap();
    let model = LeafModel::Linear { active: vec![0, 1] };
    let ctx = TreeContext { model: &model, prior: &p, data: &d };
    let t = Tree::single_leaf(all(40), &ctx).unwrap();
    let g = t.apply_grow(&NodeId::root(), SplitRule { dim: 1, threshold: 0.5 }, &ctx).unwrap();
    let (l, r) = g.root().children().unwrap();
    let merged = l.stats().merge(r.stats());
    let direct = ctx.stats_of(&all(40));
    let (LeafSuffStats::Linear(a), LeafSuffStats::Linear(b)) = (&merged, &direct) else { panic!() };
    for (u, v) in a.gram.iter().zip(&b.gram) {
        assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
    }
    assert!((a.response.ss - b.response.ss).abs() <= 1e-12 * b.response.ss);
}

#[test]
fn insert_updates_path() {
    let p = prior_min(1);
    let mut d = data_1d(&[0.1, 0.9, 0.3, 0.7]);
    let t = {
        let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
        let t = Tree::single_leaf(all(4), &ctx).unwrap();
        t.apply_grow(&NodeId::root(), SplitRule { dim: 0, threshold: 0.5 }, &ctx).unwrap()
    };
    d.push(&[0.2], 5.0).unwrap();
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
    let u = t.insert(4, &ctx).unwrap();
    assert_eq!(u.num_points(), 5);
    let (l, r) = u.root().children().unwrap();
    assert_eq!(l.points().unwrap(), &[0, 2, 4]);
    assert!(std::sync::Arc::ptr_eq(
        match &u.root().kind {
            NodeKind::Internal { right, .. } => right,
            _ => unreachable!(),
        },
        match &t.root().kind {
            NodeKind::Internal { right, .. } => right,
            _ => unreachable!(),
        }
    ));
    assert_eq!(r.n(), 2);
    u.check_invariants(&ctx, &Rect::from_bounds(&d.support()), 1e-9).unwrap();
}

#[test]
fn growing_deep_leaf_lowers_prior() {
    let p = TreePrior::default();
    for d in 1..10 {
        let delta = p.log_split(d) + 2.0 * p.log_stay(d + 1) - p.log_stay(d);
        assert!(delta < 0.0);
    }
}

/// Grow a random tree by repeatedly splitting random leaves on random valid moves.
fn random_tree(seed: u64, n: usize, dim: usize) -> (Observations, Tree) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random()).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let d = Observations::from_rows(&rows, &y).unwrap();
    let p = prior_min(2);
    let tree = {
        let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
        let mut t = Tree::single_leaf(all(n), &ctx).unwrap();
        for _ in 0..8 {
            let leaves: Vec<NodeId> = t.leaves().into_iter().map(|(id, _)| id).collect();
            let id = &leaves[rng.random_range(0..leaves.len())];
            let moves = t.enumerate_grow_moves(id, &ctx).unwrap();
            if moves.is_empty() {
                continue;
            }
            let m = moves[rng.random_range(0..moves.len())];
            t = t.apply_grow(id, m.rule, &ctx).unwrap();
        }
        t
    };
    (d, tree)
}

proptest! {
    #[test]
    fn leaf_boxes_partition_support(seed in 0u64..500) {
        let (d, t) = random_tree(seed, 60, 3);
        let support = Rect::from_bounds(&d.support());
        let mut vol = 0.0;
        t.walk_boxes(&support, |n, b| if n.is_leaf() { vol += b.volume() });
        prop_assert!((vol - support.volume()).abs() < 1e-12);
        let p = prior_min(2);
        let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
        t.check_invariants(&ctx, &support, 1e-9).unwrap();
        // Every point is routed to the leaf that holds it, exactly once.
        let mut seen = 0;
        for (id, leaf) in t.leaves() {
            for &i in leaf.points().unwrap() {
                prop_assert_eq!(&t.leaf_for(d.row(i as usize)), &id);
                seen += 1;
            }
        }
        prop_assert_eq!(seen, d.len());
    }

    #[test]
    fn random_points_have_one_leaf(seed in 0u64..200, x in prop::collection::vec(-0.5f64..1.5, 3)) {
        let (d, t) = random_tree(seed, 60, 3);
        let support = Rect::from_bounds(&d.support());
        let cx = support.clamp(&x);
        let mut claims = 0;
        t.walk_boxes(&support, |n, b| {
            if n.is_leaf() && b.contains(&cx) {
                // Boundary faces belong to the left box only.
                claims += 1;
            }
        });
        prop_assert!(claims >= 1);
        let id = t.leaf_for(&x);
        prop_assert!(t.node(&id).unwrap().is_leaf());
        prop_assert_eq!(id.clone(), t.leaf_for(&cx));
        prop_assert!(t.node_box(&id, &support).unwrap().contains(&cx));
    }

    #[test]
    fn stats_conserved_over_leaves(seed in 0u64..300) {
        let (d, t) = random_tree(seed, 50, 2);
        let (mut n, mut s, mut s2) = (0, 0.0, 0.0);
        for (_, l) in t.leaves() {
            n += l.n();
            s += l.stats().sum_y();
            s2 += l.stats().sum_y2();
        }
        let total: f64 = d.responses().iter().sum();
        let total2: f64 = d.responses().iter().map(|y| y * y).sum();
        prop_assert_eq!(n, d.len());
        prop_assert!((s - total).abs() < 1e-9);
        prop_assert!((s2 - total2).abs() < 1e-9);
    }

    #[test]
    fn grow_prune_roundtrip(seed in 0u64..300) {
        let (d, t) = random_tree(seed, 50, 2);
        let p = prior_min(2);
        let ctx = TreeContext { model: &LeafModel::Constant, prior: &p, data: &d };
        for (id, _) in t.leaves() {
            for m in t.enumerate_grow_moves(&id, &ctx).unwrap().into_iter().take(3) {
                let g = t.apply_grow(&id, m.rule, &ctx).unwrap();
                let back = g.apply_prune(&id.child(Side::Left), &ctx).unwrap();
                prop_assert_eq!(&back, &t);
            }
        }
    }
}
