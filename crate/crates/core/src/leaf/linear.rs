//! Least-squares fit of a leaf plane under the reference prior π(α, β, σ²) ∝ 1/σ².

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::stats::LinearStats;
use super::VARIANCE_FLOOR;
use crate::error::{Error, Result};
use crate::stats::LN_PI;

/// Relative jitter added to the Gram diagonal when it is numerically singular.
pub const GRAM_JITTER: f64 = 1e-10;

pub(crate) struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jittered: bool,
}

/// Cholesky factor of a symmetric PSD matrix, with a single jitter retry.
pub(crate) fn factor_gram(p: usize, gram: &[f64]) -> Result<Factor> {
    let g = DMatrix::from_row_slice(p, p, gram);
    let scale = (0..p).map(|i| g[(i, i)]).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let tol = GRAM_JITTER * scale;
    if let Some(chol) = g.clone().cholesky() {
        let l = chol.l_dirty();
        if (0..p).all(|i| l[(i, i)] * l[(i, i)] > tol) {
            return Ok(Factor { chol, jittered: false });
        }
    }
    let mut gj = g;
    for i in 0..p {
        gj[(i, i)] += tol;
    }
    gj.cholesky().map(|chol| Factor { chol, jittered: true }).ok_or(Error::SingularGram)
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Everything the predictive, marginal and posterior draws need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub n: u64,
    pub mean_y: f64,
    pub mean_x: Vec<f64>,
    pub beta: Vec<f64>,
    /// Row-major inverse Gram matrix.
    pub gram_inv: Vec<f64>,
    /// Row-major lower Cholesky factor of the (possibly jittered) Gram matrix.
    pub chol_l: Vec<f64>,
    /// (s² - R) / (n - p - 1), floored.
    pub resid_var: f64,
    pub dof: f64,
    pub log_marginal: f64,
    pub jittered: bool,
}

fn required(p: usize) -> usize {
    p + 2
}

fn marginal(n: u64, p: usize, log_det: f64, rss: f64) -> (f64, f64) {
    let nu = n as f64 - p as f64 - 1.0;
    let rss = rss.max(nu * VARIANCE_FLOOR);
    let lm = -0.5 * nu * LN_PI - 0.5 * (n as f64).ln() - 0.5 * log_det + ln_gamma(0.5 * nu) - 0.5 * nu * rss.ln();
    (lm, rss / nu)
}

/// Log marginal likelihood only; skips the inverse. Second value flags jitter.
pub(crate) fn log_marginal(st: &LinearStats) -> Result<(f64, bool)> {
    let p = st.p();
    let n = st.n();
    if (n as usize) < required(p) {
        return Err(Error::UndefinedPredictive { n: n as usize, required: required(p) });
    }
    let f = factor_gram(p, &st.gram)?;
    let beta = f.chol.solve(&DVector::from_column_slice(&st.cross));
    let r: f64 = beta.iter().zip(&st.cross).map(|(b, c)| b * c).sum();
    let (lm, _) = marginal(n, p, log_det(&f.chol), st.response.ss - r);
    Ok((lm, f.jittered))
}

pub(crate) fn fit(st: &LinearStats) -> Result<LinearFit> {
    let p = st.p();
    let n = st.n();
    if (n as usize) < required(p) {
        return Err(Error::UndefinedPredictive { n: n as usize, required: required(p) });
    }
    let f = factor_gram(p, &st.gram)?;
    let beta = f.chol.solve(&DVector::from_column_slice(&st.cross));
    let r: f64 = beta.iter().zip(&st.cross).map(|(b, c)| b * c).sum();
    let (log_marginal, resid_var) = marginal(n, p, log_det(&f.chol), st.response.ss - r);
    let inv = f.chol.inverse();
    let l = f.chol.l();
    let mut gram_inv = vec![0.0; p * p];
    let mut chol_l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            gram_inv[i * p + j] = inv[(i, j)];
            chol_l[i * p + j] = l[(i, j)];
        }
    }
    Ok(LinearFit {
        n,
        mean_y: st.response.mean,
        mean_x: st.mean_x.clone(),
        beta: beta.iter().copied().collect(),
        gram_inv,
        chol_l,
        resid_var,
        dof: n as f64 - p as f64 - 1.0,
        log_marginal,
        jittered: f.jittered,
    })
}

impl LinearFit {
    pub fn p(&self) -> usize {
        self.mean_x.len()
    }

    /// x̃ᵀ G⁻¹ x̃ for centred active predictors.
    pub fn leverage(&self, centred: &[f64]) -> f64 {
        let p = self.p();
        let mut q = 0.0;
        for i in 0..p {
            let row = &self.gram_inv[i * p..(i + 1) * p];
            let mut s = 0.0;
            for j in 0..p {
                s += row[j] * centred[j];
            }
            q += centred[i] * s;
        }
        q
    }

    pub fn location(&self, xa: &[f64]) -> f64 {
        self.mean_y + self.beta.iter().zip(xa.iter().zip(&self.mean_x)).map(|(b, (x, m))| b * (x - m)).sum::<f64>()
    }

    pub fn scale2(&self, xa: &[f64]) -> f64 {
        let centred: Vec<f64> = xa.iter().zip(&self.mean_x).map(|(x, m)| x - m).collect();
        (self.resid_var * (1.0 + 1.0 / self.n as f64 + self.leverage(&centred))).max(VARIANCE_FLOOR)
    }
}
