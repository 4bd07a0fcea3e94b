use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tree::{NodeId, SplitRule, TreeContext, TreePrior};

fn rows_1d(xs: &[f64], ys: &[f64]) -> Observations {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    Observations::from_rows(&rows, ys).unwrap()
}

fn scale2_const(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let m = ys.iter().sum::<f64>() / n;
    let ss: f64 = ys.iter().map(|y| (y - m).powi(2)).sum();
    ss / (n - 1.0) * (1.0 + 1.0 / n)
}

#[test]
fn quad_integral_examples() {
    assert!((quad_box_integral(&[1.0], &[0.0], &[1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    let v = quad_box_integral(&[1.0; 4], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
    assert!((v - 7.0 / 6.0).abs() < 1e-14);
    assert!(matches!(quad_box_integral(&[1.0], &[0.5], &[0.5]), Err(Error::DegenerateBox(0))));
}

/// Composite Simpson cubature of x̃ᵀ G x̃ over a box (exact for quadratics up to rounding).
fn simpson_quad(g: &[f64], lo: &[f64], hi: &[f64], m: usize) -> f64 {
    let p = lo.len();
    let nodes: Vec<Vec<(f64, f64)>> = (0..p)
        .map(|k| {
            let h = (hi[k] - lo[k]) / (2 * m) as f64;
            (0..=2 * m)
                .map(|i| {
                    let w = if i == 0 || i == 2 * m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    (lo[k] + i as f64 * h, w * h / 3.0)
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    let mut idx = vec![0usize; p];
    loop {
        let x: Vec<f64> = (0..p).map(|k| nodes[k][idx[k]].0).collect();
        let w: f64 = (0..p).map(|k| nodes[k][idx[k]].1).product();
        let mut q = 0.0;
        for i in 0..p {
            for j in 0..p {
                q += x[i] * g[i * p + j] * x[j];
            }
        }
        total += w * q;
        let mut k = 0;
        loop {
            if k == p {
                return total;
            }
            idx[k] += 1;
            if idx[k] < nodes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub(crate) fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    let a: Vec<f64> = (0..p * p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let mut g = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            g[i * p + j] = (0..p).map(|k| a[i * p + k] * a[j * p + k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
        }
    }
    g
}

#[test]
fn quad_integral_matches_cubature() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let g = random_spd(&mut rng, 3);
        let lo: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.8).collect();
        let hi: Vec<f64> = lo.iter().map(|a| a + 0.1 + rng.random::<f64>()).collect();
        let exact = quad_box_integral(&g, &lo, &hi).unwrap();
        let num = simpson_quad(&g, &lo, &hi, 2);
        assert!((exact - num).abs() <= 1e-6 * num.abs(), "{exact} vs {num}");
    }
}

#[test]
fn quad_integral_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_spd(&mut rng, 3);
    let lo = [0.1, -0.4, 0.3];
    let hi = [0.9, 0.2, 0.5];
    let perm = [2, 0, 1];
    let gp: Vec<f64> = (0..9).map(|k| g[perm[k / 3] * 3 + perm[k % 3]]).collect();
    let lp: Vec<f64> = perm.iter().map(|&i| lo[i]).collect();
    let hp: Vec<f64> = perm.iter().map(|&i| hi[i]).collect();
    let a = quad_box_integral(&g, &lo, &hi).unwrap();
    let b = quad_box_integral(&gp, &lp, &hp).unwrap();
    assert!((a - b).abs() < 1e-13 * a.abs());
}

#[test]
fn linear_integral_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = LeafModel::Linear { active: vec![0, 1] };
    for _ in 0..5 {
        let pts: Vec<(Vec<f64>, f64)> = (0..25)
            .map(|_| {
                let x = vec![rng.random::<f64>(), rng.random::<f64>()];
                let y = 1.0 + 2.0 * x[0] - x[1] + rng.random::<f64>();
                (x, y)
            })
            .collect();
        let stats = model.stats_from(pts.iter().map(|(x, y)| (x.as_slice(), *y)));
        let bx = Rect::new(vec![-0.2, 0.1], vec![1.1, 0.7]);
        let exact = linear_leaf_variance_integral(&model, &stats, &bx).unwrap();
        let fit = model.fit(&stats).unwrap();
        let m = 100_000;
        let mut s = 0.0;
        for _ in 0..m {
            let x = [bx.lo[0] + rng.random::<f64>() * 1.3, bx.lo[1] + rng.random::<f64>() * 0.6];
            s += match model.fit_moments(&fit, &x) {
                crate::PredictiveMoments::Regression { scale2, .. } => scale2,
                _ => unreachable!(),
            };
        }
        let mc = s / m as f64 * bx.volume();
        assert!((exact - mc).abs() < 0.01 * mc, "{exact} vs {mc}");
    }
}

#[test]
fn linear_integral_without_active_dims_is_constant() {
    let ys = [1.0, 3.0, 2.0, 5.0, 4.0, 0.5];
    let d = rows_1d(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], &ys);
    let model = LeafModel::Linear { active: vec![] };
    let stats = model.stats_from(d.rows());
    let bx = Rect::new(vec![0.0], vec![2.0]);
    let v = linear_leaf_variance_integral(&model, &stats, &bx).unwrap();
    assert!((v - 2.0 * scale2_const(&ys)).abs() < 1e-12);
}

#[test]
fn perfect_linear_fit_integrates_to_floor() {
    let xs: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
    let d = rows_1d(&xs, &ys);
    let model = LeafModel::Linear { active: vec![0] };
    let stats = model.stats_from(d.rows());
    let v = linear_leaf_variance_integral(&model, &stats, &Rect::unit(1)).unwrap();
    assert!(v <= 1e-10);
}

fn split_tree(d: &Observations, model: &LeafModel, threshold: f64) -> Tree {
    let prior = TreePrior { min_leaf: 2, ..TreePrior::default() };
    let ctx = TreeContext { model, prior: &prior, data: d };
    let t = Tree::single_leaf((0..d.len() as u32).collect(), &ctx).unwrap();
    t.apply_grow(&NodeId::root(), SplitRule { dim: 0, threshold }, &ctx).unwrap()
}

#[test]
fn constant_delta_by_hand() {
    let xs = [0.1, 0.2, 0.3, 0.6, 0.7, 0.8];
    let ys = [0.0, 1.0, 0.5, 4.0, 5.0, 4.2];
    let d = rows_1d(&xs, &ys);
    let t = split_tree(&d, &LeafModel::Constant, 0.5);
    let exact = importance(&t, &LeafModel::Constant, &Rect::unit(1), DeltaMethod::ExactArea).unwrap();
    let expect = scale2_const(&ys) - 0.5 * scale2_const(&ys[..3]) - 0.5 * scale2_const(&ys[3..]);
    assert!((exact[0] - expect).abs() < 1e-12);
    let count = importance(&t, &LeafModel::Constant, &Rect::unit(1), DeltaMethod::CountApprox).unwrap();
    let expect = 6.0 * scale2_const(&ys) - 3.0 * scale2_const(&ys[..3]) - 3.0 * scale2_const(&ys[3..]);
    assert!((count[0] - expect).abs() < 1e-12);
}

#[test]
fn classification_delta_uses_smoothed_entropy() {
    let xs = [0.1, 0.2, 0.3, 0.6, 0.7, 0.8];
    let ys = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let d = rows_1d(&xs, &ys);
    let model = LeafModel::Multinomial { classes: 2 };
    let t = split_tree(&d, &model, 0.5);
    let j = importance(&t, &model, &Rect::unit(1), DeltaMethod::ExactArea).unwrap();
    // Parent (3,3) → (0.5, 0.5); children (3,0) → (3.5/4, 0.5/4).
    let h = entropy(&[3.5 / 4.0, 0.5 / 4.0]);
    assert!((j[0] - (2f64.ln() - h)).abs() < 1e-12);
}

#[test]
fn single_leaf_and_unused_dims_have_zero_importance() {
    let d = Observations::from_rows(&[vec![0.1, 0.5], vec![0.2, 0.2], vec![0.9, 0.1], vec![0.8, 0.3]], &[1.0, 2.0, 3.0, 5.0])
        .unwrap();
    let prior = TreePrior { min_leaf: 2, ..TreePrior::default() };
    let ctx = TreeContext { model: &LeafModel::Constant, prior: &prior, data: &d };
    let t = Tree::single_leaf(vec![0, 1, 2, 3], &ctx).unwrap();
    assert_eq!(importance(&t, &LeafModel::Constant, &Rect::unit(2), DeltaMethod::CountApprox).unwrap(), vec![0.0, 0.0]);
    let g = t.apply_grow(&NodeId::root(), SplitRule { dim: 1, threshold: 0.25 }, &ctx).unwrap();
    let j = importance(&g, &LeafModel::Constant, &Rect::unit(2), DeltaMethod::CountApprox).unwrap();
    assert_eq!(j[0], 0.0);
    assert_ne!(j[1], 0.0);
}

#[test]
fn restricted_linear_model_remaps_dims() {
    let m = LeafModel::Linear { active: vec![0, 2, 3] };
    assert_eq!(restrict_model(&m, &[1, 2, 3]), LeafModel::Linear { active: vec![1, 2] });
    assert_eq!(restrict_model(&LeafModel::Constant, &[0]), LeafModel::Constant);
}

#[test]
fn zero_threshold_drops_nothing() {
    let d = crate::synthetic::friedman_data(60, 6, 1.0, 2);
    let cfg = SelectConfig {
        cloud: CloudConfig::new(LeafModel::Constant, 20, 1),
        repetitions: 1,
        threshold: 0.0,
        max_rounds: 3,
        method: DeltaMethod::CountApprox,
    };
    let r = backward_select(&d, &cfg).unwrap();
    assert_eq!(r.selected, (0..6).collect::<Vec<_>>());
    assert!(backward_select(&d, &SelectConfig { threshold: 1.5, ..cfg }).is_err());
}

fn random_tree(seed: u64, model: &LeafModel) -> (Observations, Tree) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..120).map(|_| vec![rng.random(), rng.random()]).collect();
    let y: Vec<f64> = rows.iter().map(|x| (4.0 * x[0]).sin() + x[1] + 0.3 * rng.random::<f64>()).collect();
    let d = Observations::from_rows(&rows, &y).unwrap();
    let prior = TreePrior { min_leaf: 10, ..TreePrior::default() };
    let t = {
        let ctx = TreeContext { model, prior: &prior, data: &d };
        let mut t = Tree::single_leaf((0..120).collect(), &ctx).unwrap();
        for _ in 0..5 {
            let leaves: Vec<NodeId> = t.leaves().into_iter().map(|(id, _)| id).collect();
            let id = &leaves[rng.random_range(0..leaves.len())];
            let moves = t.enumerate_grow_moves(id, &ctx).unwrap();
            if !moves.is_empty() {
                t = t.apply_grow(id, moves[rng.random_range(0..moves.len())].rule, &ctx).unwrap();
            }
        }
        t
    };
    (d, t)
}

proptest! {
    #[test]
    fn importance_is_additive_over_root_subtrees(seed in 0u64..100) {
        let model = LeafModel::Constant;
        let (d, t) = random_tree(seed, &model);
        let support = Rect::from_bounds(&d.support());
        let total = importance(&t, &model, &support, DeltaMethod::ExactArea).unwrap();
        let root = t.root();
        let Some(rule) = root.rule() else { return Ok(()) };
        let (bl, br) = support.split(rule);
        let crate::tree::NodeKind::Internal { left, right, .. } = root.kind() else { unreachable!() };
        let jl = importance(&Tree::from_root(left.clone()), &model, &bl, DeltaMethod::ExactArea).unwrap();
        let jr = importance(&Tree::from_root(right.clone()), &model, &br, DeltaMethod::ExactArea).unwrap();
        let own = delta_node(root, &support, &model, DeltaMethod::ExactArea).unwrap();
        for k in 0..2 {
            let expect = jl[k] + jr[k] + if k == rule.dim { own } else { 0.0 };
            prop_assert!((total[k] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
        }
    }
}

#[test]
fn count_and_area_mostly_agree_in_sign() {
    let mut checked = 0;
    let mut disagree = 0;
    for seed in 0..200 {
        let model = LeafModel::Constant;
        let (d, t) = random_tree(seed, &model);
        let support = Rect::from_bounds(&d.support());
        t.walk_boxes(&support, |n, b| {
            let Some((l, r)) = n.children() else { return };
            let (bl, br) = b.split(n.rule().unwrap());
            let ratio = |r: &Rect| {
                let w: Vec<f64> = r.lo.iter().zip(&r.hi).map(|(a, b)| b - a).collect();
                w.iter().cloned().fold(0.0, f64::max) / w.iter().cloned().fold(f64::INFINITY, f64::min)
            };
            if l.n() < 10 || r.n() < 10 || ratio(&bl) > 100.0 || ratio(&br) > 100.0 {
                return;
            }
            let a = delta_node(n, b, &model, DeltaMethod::ExactArea).unwrap();
            let c = delta_node(n, b, &model, DeltaMethod::CountApprox).unwrap();
            checked += 1;
            if a.signum() != c.signum() {
                disagree += 1;
            }
        });
    }
    eprintln!("sign disagreements: {disagree} of {checked}");
    assert!(checked > 0);
}
