use super::*;
use crate::smc::CloudConfig;
use crate::synthetic::uniform_data;

fn rng(seed: u64) -> StreamRng {
    stream(seed, Stream::Design, 99, 0)
}

#[test]
fn lhs_is_stratified() {
    let u = UncertaintyDist::unit(1);
    let d = lhs_design(&u, 4, &mut rng(1)).unwrap();
    let mut c = d.column(0);
    c.sort_by(f64::total_cmp);
    for (i, v) in c.iter().enumerate() {
        assert!(*v >= i as f64 * 0.25 && *v <= (i + 1) as f64 * 0.25);
    }
    assert!(lhs_design(&u, 1, &mut rng(1)).is_err());
}

#[test]
fn fixed_and_degenerate_categorical_margins() {
    let u = UncertaintyDist::new(vec![
        Marginal::Fixed { value: 0.0 },
        Marginal::Categorical { levels: vec![1.0, 0.0], weights: vec![1.0, 0.0] },
    ])
    .unwrap();
    let d = lhs_design(&u, 50, &mut rng(2)).unwrap();
    assert!(d.column(0).iter().all(|&v| v == 0.0));
    assert!(d.column(1).iter().all(|&v| v == 1.0));
    assert!(UncertaintyDist::new(vec![Marginal::Uniform { lo: 1.0, hi: 1.0 }]).is_err());
}

#[test]
fn mix_design_examples() {
    let u = UncertaintyDist::unit(3);
    let m = lhs_design(&u, 5, &mut rng(3)).unwrap();
    let mp = lhs_design(&u, 5, &mut rng(4)).unwrap();
    for j in 0..3 {
        assert_eq!(mix_design(&m, &m, j).unwrap(), m);
    }
    let mixed = mix_design(&mp, &m, 1).unwrap();
    assert_eq!(mixed.column(0), mp.column(0));
    assert_eq!(mixed.column(1), m.column(1));
    assert_eq!(mixed.column(2), mp.column(2));
    let u1 = UncertaintyDist::unit(1);
    let a = lhs_design(&u1, 5, &mut rng(5)).unwrap();
    let b = lhs_design(&u1, 5, &mut rng(6)).unwrap();
    assert_eq!(mix_design(&b, &a, 0).unwrap(), a);
    let short = lhs_design(&u, 4, &mut rng(7)).unwrap();
    assert!(mix_design(&short, &m, 0).is_err());
}

fn perfect(f: &dyn Fn(&[f64]) -> f64, u: &UncertaintyDist, m: usize, seed: u64) -> IndexPair {
    let mut r = rng(seed);
    let a = lhs_design(u, m, &mut r).unwrap();
    let b = lhs_design(u, m, &mut r).unwrap();
    indices_on_designs(f, &a, &b).unwrap()
}

#[test]
fn perfect_particle_recovers_linear_indices() {
    let u = UncertaintyDist::unit(2);
    let f = |x: &[f64]| x[0] + 2.0 * x[1];
    // Average over independent designs; a single pair carries O(m^-1/2) noise.
    let (mut s, mut t) = ([0.0; 2], [0.0; 2]);
    let runs = 20;
    for seed in 0..runs {
        let p = perfect(&f, &u, 2000, seed);
        for k in 0..2 {
            s[k] += p.s[k] / runs as f64;
            t[k] += p.t[k] / runs as f64;
        }
    }
    eprintln!("{s:?} {t:?}");
    for (k, truth) in [0.2, 0.8].iter().enumerate() {
        assert!((s[k] - truth).abs() < 0.02, "{s:?}");
        assert!((t[k] - truth).abs() < 0.02, "{t:?}");
    }
}

#[test]
fn interaction_raises_total_index() {
    // y = x₁x₂ on [0,1]²: S = 3/7 ≈ 0.4286, T = 4/7 ≈ 0.5714 for both inputs.
    let u = UncertaintyDist::unit(2);
    let f = |x: &[f64]| x[0] * x[1];
    let mut s = [0.0; 2];
    let mut t = [0.0; 2];
    for seed in 0..20 {
        let p = perfect(&f, &u, 2000, seed);
        for k in 0..2 {
            s[k] += p.s[k] / 20.0;
            t[k] += p.t[k] / 20.0;
        }
    }
    for k in 0..2 {
        assert!(t[k] > s[k] + 0.08, "{s:?} {t:?}");
        assert!((s[k] - 3.0 / 7.0).abs() < 0.03 && (t[k] - 4.0 / 7.0).abs() < 0.03);
    }
}

#[test]
fn fixed_input_has_no_sensitivity() {
    let u = UncertaintyDist::unit(3).restrict(2, &Restriction::Value(0.3)).unwrap();
    let f = |x: &[f64]| x[0] + 2.0 * x[1] + 5.0 * x[2];
    let p = perfect(&f, &u, 2000, 2);
    assert!(p.s[2].abs() < 0.02 && p.t[2].abs() < 0.02, "{p:?}");
}

#[test]
fn constant_surface_is_flagged() {
    let u = UncertaintyDist::unit(2);
    let mut r = rng(3);
    let a = lhs_design(&u, 100, &mut r).unwrap();
    let b = lhs_design(&u, 100, &mut r).unwrap();
    assert!(indices_on_designs(&|_: &[f64]| 4.0, &a, &b).is_none());
    let d = uniform_data(40, 2, 1, |_| 4.0);
    let c = ParticleCloud::fit(&d, CloudConfig::new(LeafModel::Constant, 10, 1)).unwrap();
    let res = sensitivity_indices(&[c], &u, &SensitivityConfig { m: 50, seed: 1 }).unwrap();
    assert_eq!(res.flagged, 10);
    assert!(res.samples.is_empty());
}

#[test]
fn restrictions() {
    let u = UncertaintyDist::unit(2);
    let r = u.clone().restrict(0, &Restriction::Range { lo: 0.2, hi: 2.0 }).unwrap();
    assert_eq!(r.margins[0], Marginal::Uniform { lo: 0.2, hi: 1.0 });
    assert!(u.clone().restrict(0, &Restriction::Value(3.0)).is_err());
    assert!(u.restrict(5, &Restriction::Value(0.0)).is_err());
}

#[test]
fn window_default() {
    assert_eq!(default_window(1000), 81);
    assert_eq!(default_window(10), 3);
    assert_eq!(default_window(25), 3);
    assert_eq!(default_window(50), 5);
}

#[test]
fn main_effect_of_linear_function() {
    let d = uniform_data(300, 2, 4, |x| 3.0 * x[0]);
    let model = LeafModel::Linear { active: vec![0, 1] };
    let c = ParticleCloud::fit(&d, CloudConfig::new(model, 20, 2)).unwrap();
    let u = UncertaintyDist::unit(2).restrict(1, &Restriction::Value(0.0)).unwrap();
    let me = main_effects(&[c], &u, 500, default_window(500), 1).unwrap();
    let e = &me.effects[0];
    for (g, v) in e.grid.iter().zip(&e.mean) {
        if (0.1..=0.9).contains(g) {
            assert!((v - 3.0 * g).abs() < 0.05, "{g}: {v}");
        }
    }
    assert!(me.effects[1].degenerate);
    assert_eq!(me.effects[1].grid.len(), 1);
    assert_eq!(e.curves.len(), 20);
}

#[test]
fn constant_particles_give_flat_curves() {
    let d = uniform_data(40, 1, 1, |_| 2.5);
    let c = ParticleCloud::fit(&d, CloudConfig::new(LeafModel::Constant, 5, 1)).unwrap();
    let me = main_effects(&[c], &UncertaintyDist::unit(1), 100, 5, 1).unwrap();
    assert!(me.effects[0].mean.iter().all(|v| (v - 2.5).abs() < 1e-12));
    assert!(main_effects(&[], &UncertaintyDist::unit(1), 100, 5, 1).is_err());
}

#[test]
fn results_are_reproducible() {
    let d = uniform_data(80, 2, 3, |x| x[0] + x[1] * x[1]);
    let c = ParticleCloud::fit(&d, CloudConfig::new(LeafModel::Constant, 10, 1)).unwrap();
    let u = UncertaintyDist::unit(2);
    let cfg = SensitivityConfig { m: 100, seed: 5 };
    let a = sensitivity_indices(std::slice::from_ref(&c), &u, &cfg).unwrap();
    let b = sensitivity_indices(std::slice::from_ref(&c), &u, &cfg).unwrap();
    assert_eq!(a, b);
}
