//! Synthetic test surfaces and designs.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Observations;
use crate::rng::{stream, Stream};

/// `10 sin(π x₁ x₂) + 20 (x₃ − ½)² + 10 x₄ + 5 x₅`; extra inputs are ignored.
pub fn friedman(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

/// `n` uniform points in `[0, 1]^dim` with Friedman responses plus N(0, noise²).
pub fn friedman_data(n: usize, dim: usize, noise: f64, seed: u64) -> Observations {
    assert!(dim >= 5, "the Friedman function uses five inputs");
    let mut rng = stream(seed, Stream::Synthetic, 0, 0);
    let mut obs = Observations::with_capacity(dim, n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let e: f64 = rng.sample(StandardNormal);
        obs.push(&x, friedman(&x) + noise * e).expect("dimension matches");
    }
    obs
}

/// `n` uniform points in `[0, 1]^dim` with responses `f(x)`.
pub fn uniform_data(n: usize, dim: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Observations {
    let mut rng = stream(seed, Stream::Synthetic, 1, 0);
    let mut obs = Observations::with_capacity(dim, n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        obs.push(&x, f(&x)).expect("dimension matches");
    }
    obs
}

/// Inputs of the tuning surface: two unroll factors in `1..=30` and three flags.
pub const TUNING_DIM: usize = 5;

/// All 7200 configurations in lexicographic order `(x₁, x₂, x₃, x₄, x₅)`.
pub fn tuning_space() -> Vec<Vec<f64>> {
    let mut v = Vec::with_capacity(7200);
    for a in 1..=30 {
        for b in 1..=30 {
            for f in 0..8u32 {
                v.push(vec![a as f64, b as f64, (f >> 2 & 1) as f64, (f >> 1 & 1) as f64, (f & 1) as f64]);
            }
        }
    }
    v
}

/// Noiseless runtime: a wide global basin at (6, 19) and a shallower one at
/// (25, 7), with flag penalties.
pub fn tuning_mean(x: &[f64]) -> f64 {
    let da = ((x[0] - 6.0).powi(2) + (x[1] - 19.0).powi(2)) / 600.0;
    let db = ((x[0] - 25.0).powi(2) + (x[1] - 7.0).powi(2)) / 400.0;
    1.0 + 0.25 * x[2] + 0.15 * x[3] + 0.03 * x[4] + da.min(0.1 + db)
}

/// Noise standard deviation; grows with the runtime and with the last flag.
pub fn tuning_sd(x: &[f64]) -> f64 {
    0.01 + 0.02 * (tuning_mean(x) - 1.0) + 0.01 * x[4]
}

/// One noisy runtime; `rep` indexes replicate measurements.
pub fn tuning_observe(x: &[f64], seed: u64, rep: u64) -> f64 {
    let key = x.iter().fold(0u64, |k, v| k * 31 + *v as u64);
    let mut rng = stream(seed, Stream::Synthetic, 2 + rep, key);
    let z: f64 = rng.sample(StandardNormal);
    tuning_mean(x) + tuning_sd(x) * z
}

/// 0/1 failure labels, each failing independently with probability `rate`.
pub fn random_failures(points: &[Vec<f64>], rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Stream::Synthetic, 3, 0);
    points.iter().map(|_| if rng.random::<f64>() < rate { 1.0 } else { 0.0 }).collect()
}

/// Deterministic failure of every point with `x[dim] > cut`.
pub fn box_failures(points: &[Vec<f64>], dim: usize, cut: f64) -> Vec<f64> {
    points.iter().map(|p| if p[dim] > cut { 1.0 } else { 0.0 }).collect()
}
