//! Python bindings: fit and update particle clouds, then query relevance,
//! sensitivity, Bayes factors and expected improvement.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dyntree::io::{snapshot, workflow, RunConfig};
use dyntree::optimize::{expected_improvement, maxmin_subsample, MetricWeights};
use dyntree::sensitivity::{sensitivity_indices, SensitivityConfig, UncertaintyDist};
use dyntree::smc::{bayes_factor, CloudConfig, ParticleCloud};
use dyntree::varsel::{relevance, DeltaMethod};
use dyntree::{Error, LeafModel, Observations, TreePrior};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        2 => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn leaf_model(leaf: &str, dim: usize, active: Option<Vec<usize>>, classes: Option<usize>) -> PyResult<LeafModel> {
    match leaf {
        "constant" => Ok(LeafModel::Constant),
        "linear" => Ok(LeafModel::Linear { active: active.unwrap_or_else(|| (0..dim).collect()) }),
        "multinomial" => Ok(LeafModel::Multinomial {
            classes: classes.ok_or_else(|| PyValueError::new_err("multinomial leaves need `classes`"))?,
        }),
        other => Err(PyValueError::new_err(format!("unknown leaf model {other:?}"))),
    }
}

/// A particle approximation to the dynamic-tree posterior.
#[pyclass(name = "Cloud", module = "dyntree_py")]
struct Cloud {
    inner: ParticleCloud,
}

#[pymethods]
impl Cloud {
    /// Fit on rows `x` with responses `y` (class indices for multinomial leaves).
    /// Clouds compared by a Bayes factor need the same `prefix`.
    #[staticmethod]
    #[pyo3(signature = (x, y, leaf = "constant", particles = 1000, seed = 42, active = None, classes = None, alpha = 0.95, beta = 2.0, min_leaf = 5, prefix = None))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        leaf: &str,
        particles: usize,
        seed: u64,
        active: Option<Vec<usize>>,
        classes: Option<usize>,
        alpha: f64,
        beta: f64,
        min_leaf: usize,
        prefix: Option<usize>,
    ) -> PyResult<Self> {
        let data = Observations::from_rows(&x, &y).map_err(py_err)?;
        let model = leaf_model(leaf, data.dim(), active, classes)?;
        let prior = TreePrior { alpha, beta, min_leaf, ..TreePrior::default() };
        prior.validate().map_err(py_err)?;
        let mut cfg = CloudConfig::new(model, particles, seed).with_prior(prior);
        cfg.prefix = prefix;
        Ok(Cloud { inner: ParticleCloud::fit(&data, cfg).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Cloud { inner: snapshot::load(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        snapshot::save(&self.inner, &path).map_err(py_err)
    }

    /// Assimilate one observation; returns the log mean predictive density.
    fn update(&mut self, x: Vec<f64>, y: f64) -> PyResult<f64> {
        Ok(self.inner.update(&x, y).map_err(py_err)?.log_mean_predictive)
    }

    fn predict_mean(&self, x: Vec<f64>) -> f64 {
        self.inner.predict_mean(&x)
    }

    /// Per-particle log predictive density of `(x, y)`.
    fn log_predictive(&self, x: Vec<f64>, y: f64) -> Vec<f64> {
        self.inner.log_predictive(&x, y)
    }

    #[getter]
    fn log_marginal(&self) -> f64 {
        self.inner.log_marginal()
    }

    #[getter]
    fn trace(&self) -> Vec<f64> {
        self.inner.trace().to_vec()
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn unique_trees(&self) -> usize {
        self.inner.unique_trees().len()
    }

    fn __repr__(&self) -> String {
        format!("Cloud(particles={}, t={}, log_marginal={:.4})", self.inner.len(), self.inner.t(), self.inner.log_marginal())
    }
}

fn inner(clouds: &[PyRef<'_, Cloud>]) -> Vec<ParticleCloud> {
    clouds.iter().map(|c| c.inner.clone()).collect()
}

/// Pooled `P(J_k > 0)` per input.
#[pyfunction]
#[pyo3(signature = (clouds, exact_area = false))]
fn relevance_probabilities(clouds: Vec<PyRef<'_, Cloud>>, exact_area: bool) -> PyResult<Vec<f64>> {
    let method = if exact_area { DeltaMethod::ExactArea } else { DeltaMethod::CountApprox };
    Ok(relevance(&inner(&clouds), None, method).map_err(py_err)?.p_positive)
}

/// Posterior-mean first-order and total indices under uniform inputs on `bounds`.
#[pyfunction]
#[pyo3(signature = (clouds, bounds, m = 1000, seed = 42))]
fn sensitivity(clouds: Vec<PyRef<'_, Cloud>>, bounds: Vec<(f64, f64)>, m: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let u = UncertaintyDist::from_bounds(&bounds).map_err(py_err)?;
    let r = sensitivity_indices(&inner(&clouds), &u, &SensitivityConfig { m, seed }).map_err(py_err)?;
    Ok((r.mean_s(0), r.mean_t(0)))
}

/// Final-step log Bayes factor of `a` over `b`.
#[pyfunction]
fn log_bayes_factor(a: PyRef<'_, Cloud>, b: PyRef<'_, Cloud>) -> PyResult<f64> {
    Ok(bayes_factor(&a.inner, &b.inner).map_err(py_err)?.final_log_bf())
}

#[pyfunction]
#[pyo3(name = "expected_improvement")]
fn py_expected_improvement(cloud: PyRef<'_, Cloud>, candidates: Vec<Vec<f64>>, y_best: f64) -> PyResult<Vec<f64>> {
    expected_improvement(&cloud.inner, &candidates, y_best).map_err(py_err)
}

/// Greedy maximin subset; `categorical` flags inputs compared by mismatch.
#[pyfunction]
#[pyo3(name = "maxmin_subsample", signature = (points, size, categorical = None))]
fn py_maxmin(points: Vec<Vec<f64>>, size: usize, categorical: Option<Vec<bool>>) -> PyResult<Vec<usize>> {
    let dim = points.first().map_or(0, Vec::len);
    let categorical = categorical.unwrap_or_else(|| vec![false; dim]);
    maxmin_subsample(&points, size, &MetricWeights { categorical, weights: vec![1.0; dim] }).map_err(py_err)
}

/// Run a CLI workflow; returns the summary as TOML text.
#[pyfunction]
#[pyo3(signature = (command, out_dir, config = None, data = None, schema = None, snapshot = None, points = None, replay = None))]
#[allow(clippy::too_many_arguments)]
fn run_workflow(
    command: &str,
    out_dir: PathBuf,
    config: Option<&str>,
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    snapshot: Option<PathBuf>,
    points: Option<PathBuf>,
    replay: Option<PathBuf>,
) -> PyResult<String> {
    let cmd: workflow::Command = serde_json::from_str(&format!("{{\"name\":{command:?}}}"))
        .map_err(|_| PyValueError::new_err(format!("unknown or parameterised command {command:?}")))?;
    let cfg = match config {
        Some(text) => RunConfig::from_toml(text).map_err(py_err)?,
        None => RunConfig::default(),
    };
    let inputs = workflow::Inputs { data, schema, snapshot, points, replay };
    let (report, _) = workflow::execute(&cmd, &cfg, &inputs, &out_dir).map_err(py_err)?;
    Ok(report.summary_text())
}

#[pymodule]
fn dyntree_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Cloud>()?;
    m.add_function(wrap_pyfunction!(relevance_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(log_bayes_factor, m)?)?;
    m.add_function(wrap_pyfunction!(py_expected_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(py_maxmin, m)?)?;
    m.add_function(wrap_pyfunction!(run_workflow, m)?)?;
    Ok(())
}
