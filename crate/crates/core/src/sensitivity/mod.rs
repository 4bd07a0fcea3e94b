//! First-order and total sensitivity indices and main-effect curves,
//! computed per particle on posterior draws of the leaf mean surface.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leaf::{LeafDraw, LeafModel};
use crate::rng::{stream, Stream, StreamRng};
use crate::schema::{ColumnSchema, Support};
use crate::smc::ParticleCloud;
use crate::stats::quantiles;
use crate::tree::Tree;

/// Below this response variance a particle's indices are undefined.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Marginal of one input under the uncertainty distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Marginal {
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
    Categorical { levels: Vec<f64>, weights: Vec<f64> },
}

impl Marginal {
    fn validate(&self, k: usize) -> Result<()> {
        match self {
            Marginal::Uniform { lo, hi } if !(lo < hi) => {
                Err(Error::config(format!("input {k}: uniform needs lo < hi, got [{lo}, {hi}]")))
            }
            Marginal::Categorical { levels, weights } => {
                let total: f64 = weights.iter().sum();
                if levels.is_empty() || levels.len() != weights.len() || weights.iter().any(|w| *w < 0.0) {
                    Err(Error::config(format!("input {k}: malformed categorical margin")))
                } else if (total - 1.0).abs() > 1e-9 {
                    Err(Error::config(format!("input {k}: categorical weights sum to {total}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// `(lo, hi)` covered by the margin.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Marginal::Uniform { lo, hi } => (*lo, *hi),
            Marginal::Fixed { value } => (*value, *value),
            Marginal::Categorical { levels, .. } => levels
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        }
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Marginal::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Marginal::Fixed { value } => *value,
            Marginal::Categorical { levels, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (l, w) in levels.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *l;
                    }
                }
                *levels.iter().zip(weights).rev().find(|(_, w)| **w > 0.0).map_or(&levels[0], |(l, _)| l)
            }
        }
    }
}

/// Restriction of one input, as given on the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restriction {
    Range { lo: f64, hi: f64 },
    Value(f64),
}

/// Independent product of per-input margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDist {
    pub margins: Vec<Marginal>,
}

impl UncertaintyDist {
    pub fn new(margins: Vec<Marginal>) -> Result<Self> {
        for (k, m) in margins.iter().enumerate() {
            m.validate(k)?;
        }
        Ok(UncertaintyDist { margins })
    }

    pub fn unit(dim: usize) -> Self {
        UncertaintyDist { margins: vec![Marginal::Uniform { lo: 0.0, hi: 1.0 }; dim] }
    }

    /// Uniform over ordinal ranges, equal weights over categorical levels.
    pub fn from_schema(columns: &[&ColumnSchema]) -> Result<Self> {
        let margins = columns
            .iter()
            .map(|c| match (&c.support, c.is_categorical()) {
                (Support::Range { min, max }, false) if min < max => Marginal::Uniform { lo: *min, hi: *max },
                (Support::Range { min, .. }, false) => Marginal::Fixed { value: *min },
                _ => {
                    let (lo, hi) = c.interval();
                    let levels: Vec<f64> = (lo as i64..=hi as i64).map(|v| v as f64).collect();
                    let w = 1.0 / levels.len() as f64;
                    Marginal::Categorical { weights: vec![w; levels.len()], levels }
                }
            })
            .collect();
        UncertaintyDist::new(margins)
    }

    /// Uniform over each observed `(min, max)`.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        UncertaintyDist::new(
            bounds
                .iter()
                .map(|&(lo, hi)| if lo < hi { Marginal::Uniform { lo, hi } } else { Marginal::Fixed { value: lo } })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.margins.len()
    }

    /// Narrow input `k`: ranges intersect a uniform margin (or filter
    /// categorical levels); values fix the input.
    pub fn restrict(mut self, k: usize, r: &Restriction) -> Result<Self> {
        let m = self.margins.get(k).ok_or_else(|| Error::config(format!("no input {k} to restrict")))?;
        let (lo0, hi0) = m.range();
        let new = match (r, m) {
            (Restriction::Value(v), _) => {
                if *v < lo0 - 1e-12 || *v > hi0 + 1e-12 {
                    return Err(Error::config(format!("input {k}: value {v} outside [{lo0}, {hi0}]")));
                }
                Marginal::Fixed { value: *v }
            }
            (Restriction::Range { lo, hi }, Marginal::Categorical { levels, weights }) => {
                let keep: Vec<(f64, f64)> = levels
                    .iter()
                    .zip(weights)
                    .filter(|(l, _)| **l >= *lo && **l <= *hi)
                    .map(|(l, w)| (*l, *w))
                    .collect();
                let total: f64 = keep.iter().map(|p| p.1).sum();
                if keep.is_empty() || total <= 0.0 {
                    return Err(Error::config(format!("input {k}: restriction leaves no levels")));
                }
                Marginal::Categorical {
                    levels: keep.iter().map(|p| p.0).collect(),
                    weights: keep.iter().map(|p| p.1 / total).collect(),
                }
            }
            (Restriction::Range { lo, hi }, _) => {
                let (a, b) = (lo.max(lo0), hi.min(hi0));
                if a > b {
                    return Err(Error::config(format!("input {k}: [{lo}, {hi}] misses [{lo0}, {hi0}]")));
                }
                if a == b {
                    Marginal::Fixed { value: a }
                } else {
                    Marginal::Uniform { lo: a, hi: b }
                }
            }
        };
        self.margins[k] = new;
        Ok(self)
    }
}

/// Row-major `rows × cols` design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Design {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.values[i * self.cols + j]).collect()
    }
}

/// Latin hypercube on uniform margins (one jittered point per stratum,
/// strata permuted independently per column); other margins i.i.d.
pub fn lhs_design(u: &UncertaintyDist, m: usize, rng: &mut StreamRng) -> Result<Design> {
    if m < 2 {
        return Err(Error::config("design size must be at least 2"));
    }
    let p = u.dim();
    let mut values = vec![0.0; m * p];
    for (k, margin) in u.margins.iter().enumerate() {
        match margin {
            Marginal::Uniform { lo, hi } => {
                let mut strata: Vec<usize> = (0..m).collect();
                rand::seq::SliceRandom::shuffle(strata.as_mut_slice(), rng);
                for (i, s) in strata.into_iter().enumerate() {
                    let v = (s as f64 + rng.random::<f64>()) / m as f64;
                    values[i * p + k] = lo + (hi - lo) * v;
                }
            }
            other => {
                for i in 0..m {
                    values[i * p + k] = other.sample(rng);
                }
            }
        }
    }
    Ok(Design { rows: m, cols: p, values })
}

/// `M′` with column `j` taken from `M`.
pub fn mix_design(m_prime: &Design, m: &Design, j: usize) -> Result<Design> {
    if m_prime.rows != m.rows || m_prime.cols != m.cols {
        return Err(Error::LengthMismatch { left: m_prime.values.len(), right: m.values.len() });
    }
    if j >= m.cols {
        return Err(Error::config(format!("column {j} out of range")));
    }
    let mut out = m_prime.clone();
    for i in 0..m.rows {
        out.values[i * m.cols + j] = m.values[i * m.cols + j];
    }
    Ok(out)
}

/// Indices of one surface realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexPair {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

/// Saltelli-style estimates for a function on paired designs: moments on
/// `M`, first-order cross-moments `y(M)ᵀ y(M′_j)/(m−1)`, total-effect
/// cross-moments `y(M′)ᵀ y(M′_j)/(m−1)`. `None` when the variance is below
/// [`MIN_VARIANCE`]. Inputs constant across both designs get exact zeros.
pub fn indices_on_designs(f: &dyn Fn(&[f64]) -> f64, m: &Design, m_prime: &Design) -> Option<IndexPair> {
    let n = m.rows;
    let y: Vec<f64> = (0..n).map(|i| f(m.row(i))).collect();
    let yp: Vec<f64> = (0..n).map(|i| f(m_prime.row(i))).collect();
    let e = y.iter().sum::<f64>() / n as f64;
    let v = y.iter().map(|a| a * a).sum::<f64>() / n as f64 - e * e;
    if !(v >= MIN_VARIANCE) {
        return None;
    }
    let mut s = Vec::with_capacity(m.cols);
    let mut t = Vec::with_capacity(m.cols);
    let mut row = vec![0.0; m.cols];
    for j in 0..m.cols {
        // A constant input carries no variance; report exact zeros instead of noise.
        let c0 = m.row(0)[j];
        if (0..n).all(|i| m.row(i)[j] == c0 && m_prime.row(i)[j] == c0) {
            s.push(0.0);
            t.push(0.0);
            continue;
        }
        let (mut cs, mut ct) = (0.0, 0.0);
        for i in 0..n {
            row.copy_from_slice(m_prime.row(i));
            row[j] = m.row(i)[j];
            let yj = f(&row);
            cs += y[i] * yj;
            ct += yp[i] * yj;
        }
        let denom = (n - 1) as f64;
        s.push((cs / denom - e * e) / v);
        t.push(1.0 - (ct / denom - e * e) / v);
    }
    Some(IndexPair { s, t })
}

/// Settings shared by sensitivity runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub m: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySample {
    pub cloud: usize,
    pub particle: usize,
    /// Class whose probability surface was analysed (0 for regression).
    pub class: usize,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub m: usize,
    pub seed: u64,
    pub dim: usize,
    /// Number of analysed surfaces per particle (classes, or 1).
    pub classes: usize,
    pub samples: Vec<SensitivitySample>,
    /// Surfaces with (near) zero variance, excluded from `samples`.
    pub flagged: usize,
}

impl SensitivityResult {
    fn of_class(&self, class: usize) -> impl Iterator<Item = &SensitivitySample> {
        self.samples.iter().filter(move |s| s.class == class)
    }

    pub fn mean_s(&self, class: usize) -> Vec<f64> {
        self.column_mean(class, |s| &s.s)
    }

    pub fn mean_t(&self, class: usize) -> Vec<f64> {
        self.column_mean(class, |s| &s.t)
    }

    fn column_mean(&self, class: usize, f: impl Fn(&SensitivitySample) -> &Vec<f64>) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for s in self.of_class(class) {
            for (a, v) in acc.iter_mut().zip(f(s)) {
                *a += v;
            }
            n += 1;
        }
        acc.iter().map(|a| if n == 0 { f64::NAN } else { a / n as f64 }).collect()
    }

    /// Per-dimension quantiles of S (`total = false`) or T.
    pub fn quantiles(&self, class: usize, total: bool, qs: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|k| {
                let v: Vec<f64> = self.of_class(class).map(|s| if total { s.t[k] } else { s.s[k] }).collect();
                quantiles(&v, qs)
            })
            .collect()
    }

    /// Means of the indices clipped to `[0, 1]`.
    pub fn clipped_means(&self, class: usize) -> (Vec<f64>, Vec<f64>) {
        let clip = |v: f64| v.clamp(0.0, 1.0);
        let mut s = vec![0.0; self.dim];
        let mut t = vec![0.0; self.dim];
        let mut n = 0.0;
        for x in self.of_class(class) {
            for k in 0..self.dim {
                s[k] += clip(x.s[k]);
                t[k] += clip(x.t[k]);
            }
            n += 1.0;
        }
        (s.iter().map(|v| v / n).collect(), t.iter().map(|v| v / n).collect())
    }
}

fn draws_for(tree: &Tree, model: &LeafModel, rng: &mut StreamRng) -> Vec<LeafDraw> {
    tree.leaves().iter().map(|(_, n)| model.draw(n.fit().expect("leaf"), rng)).collect()
}

fn class_count(model: &LeafModel) -> usize {
    match model {
        LeafModel::Multinomial { classes } => *classes,
        _ => 1,
    }
}

fn check_dims(clouds: &[ParticleCloud], u: &UncertaintyDist) -> Result<()> {
    let first = clouds.first().ok_or_else(|| Error::config("sensitivity needs at least one cloud"))?;
    if first.data().dim() != u.dim() {
        return Err(Error::LengthMismatch { left: u.dim(), right: first.data().dim() });
    }
    Ok(())
}

/// Per-particle S and T indices: each particle gets its own designs and one
/// posterior draw of its leaf mean parameters (no observation noise).
pub fn sensitivity_indices(clouds: &[ParticleCloud], u: &UncertaintyDist, cfg: &SensitivityConfig) -> Result<SensitivityResult> {
    check_dims(clouds, u)?;
    let model = clouds[0].config().model.clone();
    let classes = class_count(&model);
    let jobs: Vec<(usize, usize)> =
        clouds.iter().enumerate().flat_map(|(c, cl)| (0..cl.len()).map(move |i| (c, i))).collect();
    let per: Vec<Vec<Option<SensitivitySample>>> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let key = (c as u64) << 32 | i as u64;
            let mut drng = stream(cfg.seed, Stream::Design, 0, key);
            let m = lhs_design(u, cfg.m, &mut drng)?;
            let mp = lhs_design(u, cfg.m, &mut drng)?;
            let tree = &clouds[c].particles()[i];
            let draws = draws_for(tree, &model, &mut stream(cfg.seed, Stream::Posterior, 0, key));
            Ok((0..classes)
                .map(|class| {
                    let f = |x: &[f64]| draws[tree.leaf_ordinal(x)].value(&model, x, class);
                    indices_on_designs(&f, &m, &mp).map(|p| SensitivitySample { cloud: c, particle: i, class, s: p.s, t: p.t })
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut samples = Vec::new();
    let mut flagged = 0;
    for v in per.into_iter().flatten() {
        match v {
            Some(s) => samples.push(s),
            None => flagged += 1,
        }
    }
    Ok(SensitivityResult { m: cfg.m, seed: cfg.seed, dim: u.dim(), classes, samples, flagged })
}

/// Default moving-average window: `max(3, round(2m/25))`, made odd.
pub fn default_window(m: usize) -> usize {
    let w = ((2 * m) as f64 / 25.0).round() as usize;
    let w = w.max(3);
    if w.is_multiple_of(2) { w + 1 } else { w }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainEffectCurve {
    pub dim: usize,
    pub grid: Vec<f64>,
    /// `[particle][grid point]`.
    pub curves: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
    /// Margin was fixed, so the grid is a single point.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainEffectCurves {
    pub m: usize,
    pub window: usize,
    pub seed: u64,
    pub effects: Vec<MainEffectCurve>,
}

pub const GRID_POINTS: usize = 100;

fn grid_for(margin: &Marginal) -> (Vec<f64>, bool) {
    match margin {
        Marginal::Fixed { value } => (vec![*value], true),
        Marginal::Categorical { levels, .. } => {
            let mut l = levels.clone();
            l.sort_by(f64::total_cmp);
            l.dedup();
            (l, false)
        }
        Marginal::Uniform { lo, hi } => {
            ((0..GRID_POINTS).map(|g| lo + (hi - lo) * g as f64 / (GRID_POINTS - 1) as f64).collect(), false)
        }
    }
}

/// Moving average of `(x, y)` pairs sorted by `x`, read off at `grid` by the
/// nearest sorted abscissa.
fn smooth(mut pts: Vec<(f64, f64)>, window: usize, grid: &[f64]) -> Vec<f64> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    let h = window / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for p in &pts {
        prefix.push(prefix.last().unwrap() + p.1);
    }
    let avg = |i: usize| {
        let (a, b) = (i.saturating_sub(h), (i + h + 1).min(n));
        (prefix[b] - prefix[a]) / (b - a) as f64
    };
    grid.iter()
        .map(|&g| {
            let k = pts.partition_point(|p| p.0 < g);
            let i = if k == 0 {
                0
            } else if k == n || (g - pts[k - 1].0) <= (pts[k].0 - g) {
                k - 1
            } else {
                k
            };
            avg(i)
        })
        .collect()
}

/// Smoothed main effects `E{y | x_j}` per particle from posterior predictive
/// means on the particle's `M` and `M′` designs.
pub fn main_effects(
    clouds: &[ParticleCloud],
    u: &UncertaintyDist,
    m: usize,
    window: usize,
    seed: u64,
) -> Result<MainEffectCurves> {
    check_dims(clouds, u)?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::config(format!("window must be odd and at least 3, got {window}")));
    }
    let model = clouds[0].config().model.clone();
    let p = u.dim();
    let jobs: Vec<(usize, usize)> =
        clouds.iter().enumerate().flat_map(|(c, cl)| (0..cl.len()).map(move |i| (c, i))).collect();
    let grids: Vec<(Vec<f64>, bool)> = u.margins.iter().map(grid_for).collect();
    let per: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let key = (c as u64) << 32 | i as u64;
            let mut drng = stream(seed, Stream::Design, 1, key);
            let d1 = lhs_design(u, m, &mut drng)?;
            let d2 = lhs_design(u, m, &mut drng)?;
            let tree = &clouds[c].particles()[i];
            let rows: Vec<&[f64]> = (0..m).map(|r| d1.row(r)).chain((0..m).map(|r| d2.row(r))).collect();
            let yhat: Vec<f64> =
                rows.iter().map(|x| model.fit_mean(tree.leaf_node_for(x).fit().expect("leaf"), x)).collect();
            Ok((0..p)
                .map(|j| smooth(rows.iter().zip(&yhat).map(|(x, y)| (x[j], *y)).collect(), window, &grids[j].0))
                .collect())
        })
        .collect::<Result<_>>()?;
    let effects = (0..p)
        .map(|j| {
            let (grid, degenerate) = grids[j].clone();
            let curves: Vec<Vec<f64>> = per.iter().map(|c| c[j].clone()).collect();
            let at = |g: usize| curves.iter().map(|c| c[g]).collect::<Vec<f64>>();
            let mean = (0..grid.len()).map(|g| at(g).iter().sum::<f64>() / curves.len() as f64).collect();
            let q: Vec<Vec<f64>> = (0..grid.len()).map(|g| quantiles(&at(g), &[0.05, 0.95])).collect();
            MainEffectCurve {
                dim: j,
                q05: q.iter().map(|v| v[0]).collect(),
                q95: q.iter().map(|v| v[1]).collect(),
                grid,
                curves,
                mean,
                degenerate,
            }
        })
        .collect();
    Ok(MainEffectCurves { m, window, seed, effects })
}

#[cfg(test)]
mod tests;
