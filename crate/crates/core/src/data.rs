use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major covariates paired with a scalar response.
///
/// Classification responses are stored as class indices (`0.0`, `1.0`, ...).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Observations {
    pub fn new(dim: usize) -> Self {
        Observations { dim, x: Vec::new(), y: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Observations { dim, x: Vec::with_capacity(n * dim), y: Vec::with_capacity(n) }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], y: &[f64]) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::LengthMismatch { left: rows.len(), right: y.len() });
        }
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut obs = Observations::with_capacity(dim, rows.len());
        for (r, &v) in rows.iter().zip(y) {
            obs.push(r.as_ref(), v)?;
        }
        Ok(obs)
    }

    pub fn from_flat(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != dim * y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: dim * y.len() });
        }
        Ok(Observations { dim, x, y })
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::LengthMismatch { left: x.len(), right: self.dim });
        }
        self.x.extend_from_slice(x);
        self.y.push(y);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn value(&self, i: usize, dim: usize) -> f64 {
        self.x[i * self.dim + dim]
    }

    #[inline]
    pub fn response(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn flat_x(&self) -> &[f64] {
        &self.x
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.y[i]))
    }

    /// Observations restricted to the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut out = Observations::with_capacity(self.dim, rows.len());
        for &i in rows {
            out.x.extend_from_slice(self.row(i));
            out.y.push(self.y[i]);
        }
        out
    }

    /// Observations keeping only the listed predictor columns.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.dim) {
            return Err(Error::config(format!("column {bad} out of range (dim {})", self.dim)));
        }
        let mut out = Observations::with_capacity(cols.len(), self.len());
        for i in 0..self.len() {
            let row = self.row(i);
            out.x.extend(cols.iter().map(|&c| row[c]));
            out.y.push(self.y[i]);
        }
        Ok(out)
    }

    /// Concatenate `other` after `self`.
    pub fn extend(&mut self, other: &Observations) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::LengthMismatch { left: other.dim, right: self.dim });
        }
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
        Ok(())
    }

    /// Per-dimension (min, max) over all rows.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for i in 0..self.len() {
            for (d, b) in out.iter_mut().enumerate() {
                let v = self.value(i, d);
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        out
    }
}
