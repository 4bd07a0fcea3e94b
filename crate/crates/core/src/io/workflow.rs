//! Subcommand implementations shared by the CLI and the bindings.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Observations;
use crate::error::{Error, Result};
use crate::io::config::{RestrictSpec, RunConfig};
use crate::io::dataset::{load_dataset, load_inputs, Dataset, SchemaSpec};
use crate::io::report::{file_digest, num, InputDigest, Manifest, Report, Table};
use crate::io::snapshot::{self, SnapshotLock};
use crate::leaf::{LeafModel, PredictiveMoments};
use crate::optimize::{
    maxmin_subsample, sequential_optimize, CandidatePool, Constraint, FnObserver, MetricWeights, Observer,
    ReplayObserver,
};
use crate::sensitivity::{default_window, main_effects, sensitivity_indices, SensitivityConfig, UncertaintyDist};
use crate::smc::{bayes_factor, prior_split_simulation, run_repetitions, ParticleCloud};
use crate::stats::quantiles;
use crate::synthetic::tuning_observe;
use crate::varsel::{backward_select, compare_column_sets, relevance, RelevanceReport, SelectConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Fit a cloud and write its snapshot.
    Fit,
    /// Append the data file to a snapshot's cloud.
    Update,
    /// Predictive summaries at the points file.
    Predict,
    Relevance,
    Select,
    /// Full model (`keep`, or every input) against it minus `drop`.
    Bayesfactor {
        #[serde(default)]
        keep: Vec<String>,
        drop: Vec<String>,
    },
    Sensitivity,
    Maineffects,
    Subsample,
    /// EI search over the points file; responses come from the replay file
    /// or from a built-in surface.
    Optimize {
        #[serde(default)]
        surface: Option<String>,
    },
    Priorsim,
    ClassifyNa,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Update => "update",
            Command::Predict => "predict",
            Command::Relevance => "relevance",
            Command::Select => "select",
            Command::Bayesfactor { .. } => "bayesfactor",
            Command::Sensitivity => "sensitivity",
            Command::Maineffects => "maineffects",
            Command::Subsample => "subsample",
            Command::Optimize { .. } => "optimize",
            Command::Priorsim => "priorsim",
            Command::ClassifyNa => "classify-na",
        }
    }
}

/// File arguments of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Inputs {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    /// Prediction points or optimisation candidates.
    pub points: Option<PathBuf>,
    /// Recorded measurements for the replay observer.
    pub replay: Option<PathBuf>,
}

impl Inputs {
    fn roles(&self) -> Vec<(&'static str, &PathBuf)> {
        [("data", &self.data), ("schema", &self.schema), ("snapshot", &self.snapshot), ("points", &self.points), ("replay", &self.replay)]
            .into_iter()
            .filter_map(|(r, p)| p.as_ref().map(|p| (r, p)))
            .collect()
    }

    fn from_digests(d: &[InputDigest]) -> Inputs {
        let get = |role: &str| d.iter().find(|i| i.role == role).map(|i| i.path.clone());
        Inputs { data: get("data"), schema: get("schema"), snapshot: get("snapshot"), points: get("points"), replay: get("replay") }
    }
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::config(format!("--{flag} is required")))
}

fn schema(inputs: &Inputs) -> Result<SchemaSpec> {
    SchemaSpec::load(need(&inputs.schema, "schema")?)
}

fn dataset(inputs: &Inputs, cfg: &RunConfig) -> Result<Dataset> {
    let ds = load_dataset(need(&inputs.data, "data")?, &schema(inputs)?)?;
    if cfg.log_response && ds.classes() == 0 {
        ds.log_response()
    } else {
        Ok(ds)
    }
}

fn model_for(cfg: &RunConfig, ds: &Dataset) -> Result<LeafModel> {
    cfg.leaf_model(&ds.predictor_names(), &ds.ordinal_dims(), ds.classes())
}

fn trace_table(cloud: &ParticleCloud) -> String {
    let mut t = Table::new(&["t", "log_mean_predictive"]);
    for (i, v) in cloud.trace().iter().enumerate() {
        t.row(&[(cloud.t_init() + i + 1).to_string(), num(*v)]);
    }
    t.finish()
}

fn cloud_summary(r: &mut Report, cloud: &ParticleCloud) {
    r.set("observations", cloud.t() as i64);
    r.set("particles", cloud.len() as i64);
    r.set("unique_trees", cloud.unique_trees().len() as i64);
    r.set("log_marginal", cloud.log_marginal());
    r.set("degenerate_steps", cloud.degenerate_steps().iter().map(|&s| s as i64).collect::<Vec<_>>());
}

fn relevance_table(names: &[String], rel: &RelevanceReport) -> String {
    let mut header = vec!["variable".to_string(), "mean_j".into(), "p_positive".into(), "q05".into(), "q50".into(), "q95".into()];
    header.extend((0..rel.per_cloud.len()).map(|r| format!("p_rep{r}")));
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&h);
    let q = rel.quantiles();
    for (k, name) in names.iter().enumerate() {
        let mut row = vec![name.clone(), num(rel.mean[k]), num(rel.p_positive[k]), num(q[k][0]), num(q[k][1]), num(q[k][2])];
        row.extend(rel.per_cloud.iter().map(|c| num(c[k])));
        t.row(&row);
    }
    t.finish()
}

fn resolve(names: &[String], list: &[String]) -> Result<Vec<usize>> {
    list.iter()
        .map(|n| {
            names
                .iter()
                .position(|m| m == n)
                .or_else(|| n.parse::<usize>().ok().filter(|&i| i < names.len()))
                .ok_or_else(|| Error::config(format!("unknown input {n:?}")))
        })
        .collect()
}

fn uncertainty(ds: &Dataset, restrict: &[RestrictSpec]) -> Result<UncertaintyDist> {
    let cols: Vec<_> = ds.predictors().iter().collect();
    let mut u = UncertaintyDist::from_schema(&cols)?;
    let names = ds.predictor_names();
    for r in restrict {
        u = u.restrict(r.index(&names)?, &r.restriction)?;
    }
    Ok(u)
}

fn replicated_clouds(cfg: &RunConfig, ds: &Dataset, obs: &Observations) -> Result<Vec<ParticleCloud>> {
    run_repetitions(obs, &cfg.cloud(model_for(cfg, ds)?), cfg.repetitions)
}

/// Run one workflow and return its report without touching the output directory.
pub fn run(cmd: &Command, cfg: &RunConfig, inputs: &Inputs) -> Result<Report> {
    cfg.validate()?;
    let mut r = Report::default();
    r.set("command", cmd.name());
    match cmd {
        Command::Fit => {
            let ds = dataset(inputs, cfg)?;
            let cloud = ParticleCloud::fit(&ds.observations()?, cfg.cloud(model_for(cfg, &ds)?))?;
            if let Some(path) = &inputs.snapshot {
                let _lock = SnapshotLock::acquire(path)?;
                snapshot::save(&cloud, path)?;
            }
            r.add("cloud.json", snapshot::to_json(&cloud)?);
            r.add("trace.csv", trace_table(&cloud));
            cloud_summary(&mut r, &cloud);
        }
        Command::Update => {
            let path = need(&inputs.snapshot, "snapshot")?;
            let _lock = SnapshotLock::acquire(path)?;
            let mut cloud = snapshot::load(path)?;
            let ds = dataset(inputs, cfg)?;
            cloud.extend(&ds.observations()?)?;
            r.add("cloud.json", snapshot::to_json(&cloud)?);
            r.add("trace.csv", trace_table(&cloud));
            cloud_summary(&mut r, &cloud);
        }
        Command::Predict => {
            let path = need(&inputs.snapshot, "snapshot")?;
            let cloud = {
                let _lock = SnapshotLock::acquire(path)?;
                snapshot::load(path)?
            };
            let pts = load_inputs(need(&inputs.points, "points")?, &schema(inputs)?)?;
            if pts.dim() != cloud.data().dim() {
                return Err(Error::LengthMismatch { left: cloud.data().dim(), right: pts.dim() });
            }
            r.add("predictions.csv", predict_table(&cloud, &pts));
            r.set("points", pts.len() as i64);
        }
        Command::Relevance => {
            let ds = dataset(inputs, cfg)?;
            let clouds = replicated_clouds(cfg, &ds, &ds.observations()?)?;
            let rel = relevance(&clouds, None, cfg.select.method)?;
            r.add("relevance.csv", relevance_table(&ds.predictor_names(), &rel));
            r.set("p_positive", rel.p_positive.clone());
        }
        Command::Select => {
            let ds = dataset(inputs, cfg)?;
            let names = ds.predictor_names();
            let sel = backward_select(
                &ds.observations()?,
                &SelectConfig {
                    cloud: cfg.cloud(model_for(cfg, &ds)?),
                    repetitions: cfg.repetitions,
                    threshold: cfg.select.threshold,
                    max_rounds: cfg.select.max_rounds,
                    method: cfg.select.method,
                },
            )?;
            let join = |v: &[usize]| v.iter().map(|&i| names[i].as_str()).collect::<Vec<_>>().join(";");
            let mut rounds = Table::new(&["round", "active", "proposed_drop", "mean_final_log_bf", "accepted"]);
            let mut rel = Table::new(&["round", "variable", "mean_j", "p_positive"]);
            for (i, round) in sel.rounds.iter().enumerate() {
                rounds.row(&[
                    i.to_string(),
                    join(&round.active),
                    join(&round.proposed_drop),
                    num(round.mean_final_log_bf),
                    round.accepted.to_string(),
                ]);
                for (k, &c) in round.active.iter().enumerate() {
                    rel.row(&[i.to_string(), names[c].clone(), num(round.relevance.mean[k]), num(round.relevance.p_positive[k])]);
                }
            }
            r.add("selection.csv", rounds.finish());
            r.add("selection_relevance.csv", rel.finish());
            r.set("selected", sel.selected.iter().map(|&i| names[i].clone()).collect::<Vec<_>>());
        }
        Command::Bayesfactor { keep, drop } => {
            let ds = dataset(inputs, cfg)?;
            let names = ds.predictor_names();
            let full = if keep.is_empty() { (0..names.len()).collect() } else { resolve(&names, keep)? };
            let dropped = resolve(&names, drop)?;
            let reduced: Vec<usize> = full.iter().copied().filter(|c| !dropped.contains(c)).collect();
            if reduced.is_empty() || reduced.len() == full.len() {
                return Err(Error::config("the reduced model must drop some but not all inputs"));
            }
            let (mean, traces) =
                compare_column_sets(&ds.observations()?, &cfg.cloud(model_for(cfg, &ds)?), cfg.repetitions, &full, &reduced)?;
            let mut header = vec!["t".to_string()];
            header.extend((0..traces.len()).map(|k| format!("rep{k}")));
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut t = Table::new(&h);
            let t0 = traces[0].t_init;
            for s in 0..traces[0].log_bf.len() {
                let mut row = vec![(t0 + s + 1).to_string()];
                row.extend(traces.iter().map(|tr| num(tr.log_bf[s])));
                t.row(&row);
            }
            r.add("bayesfactor.csv", t.finish());
            r.set("full", full.iter().map(|&i| names[i].clone()).collect::<Vec<_>>());
            r.set("reduced", reduced.iter().map(|&i| names[i].clone()).collect::<Vec<_>>());
            r.set("final_log_bf", traces.iter().map(|t| t.final_log_bf()).collect::<Vec<_>>());
            r.set("mean_final_log_bf", mean);
        }
        Command::Sensitivity => {
            let ds = dataset(inputs, cfg)?;
            let clouds = replicated_clouds(cfg, &ds, &ds.observations()?)?;
            let u = uncertainty(&ds, &cfg.sensitivity.restrict)?;
            let res = sensitivity_indices(&clouds, &u, &SensitivityConfig { m: cfg.sensitivity.design_size(), seed: cfg.seed })?;
            let names = ds.predictor_names();
            let mut t = Table::new(&["class", "variable", "mean_s", "s_q05", "s_q50", "s_q95", "mean_t", "t_q05", "t_q50", "t_q95"]);
            let qs = [0.05, 0.5, 0.95];
            for class in 0..res.classes {
                let (ms, mt) = (res.mean_s(class), res.mean_t(class));
                let (qs_s, qs_t) = (res.quantiles(class, false, &qs), res.quantiles(class, true, &qs));
                for (k, name) in names.iter().enumerate() {
                    t.row(&[
                        class.to_string(),
                        name.clone(),
                        num(ms[k]),
                        num(qs_s[k][0]),
                        num(qs_s[k][1]),
                        num(qs_s[k][2]),
                        num(mt[k]),
                        num(qs_t[k][0]),
                        num(qs_t[k][1]),
                        num(qs_t[k][2]),
                    ]);
                }
            }
            r.add("sensitivity.csv", t.finish());
            r.set("m", res.m as i64);
            r.set("samples", res.samples.len() as i64);
            r.set("flagged", res.flagged as i64);
            r.set("restrict", cfg.sensitivity.restrict.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        }
        Command::Maineffects => {
            let ds = dataset(inputs, cfg)?;
            let clouds = replicated_clouds(cfg, &ds, &ds.observations()?)?;
            let u = uncertainty(&ds, &cfg.sensitivity.restrict)?;
            let m = cfg.sensitivity.design_size();
            let window = cfg.sensitivity.window.unwrap_or_else(|| default_window(m));
            let me = main_effects(&clouds, &u, m, window, cfg.seed)?;
            let names = ds.predictor_names();
            let mut t = Table::new(&["variable", "x", "mean", "q05", "q95"]);
            for e in &me.effects {
                for g in 0..e.grid.len() {
                    t.row(&[names[e.dim].clone(), num(e.grid[g]), num(e.mean[g]), num(e.q05[g]), num(e.q95[g])]);
                }
            }
            r.add("maineffects.csv", t.finish());
            r.set("m", m as i64);
            r.set("window", window as i64);
        }
        Command::Subsample => {
            let ds = load_inputs(need(&inputs.data, "data")?, &schema(inputs)?)?;
            let dim = ds.dim();
            let weights = if cfg.subsample.weights.is_empty() { vec![1.0; dim] } else { cfg.subsample.weights.clone() };
            let metric = MetricWeights { categorical: ds.predictors().iter().map(|c| c.is_categorical()).collect(), weights };
            let idx = maxmin_subsample(&ds.x, cfg.subsample.size, &metric)?;
            let names = ds.predictor_names();
            let mut header = vec!["row".to_string()];
            header.extend(names.iter().cloned());
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut t = Table::new(&h);
            for &i in &idx {
                let mut row = vec![(i + 1).to_string()];
                row.extend(ds.x[i].iter().map(|&v| num(v)));
                t.row(&row);
            }
            r.add("subsample.csv", t.finish());
            r.set("size", idx.len() as i64);
        }
        Command::Optimize { surface } => {
            let ds = dataset(inputs, cfg)?;
            let spec = schema(inputs)?;
            let pool_ds = load_inputs(need(&inputs.points, "points")?, &spec)?;
            let names = ds.predictor_names();
            let constraints = cfg
                .optimize
                .constraints
                .iter()
                .map(|c| Ok(Constraint { dim: c.index(&names)?, restriction: c.restriction.clone() }))
                .collect::<Result<Vec<_>>>()?;
            let pool = CandidatePool::new(pool_ds.x.clone()).with_constraints(constraints);
            let mut cloud = ParticleCloud::fit(&ds.observations()?, cfg.cloud(model_for(cfg, &ds)?))?;
            let seed = cfg.seed;
            let mut observer: Box<dyn Observer> = match (surface.as_deref(), &inputs.replay) {
                (Some("tuning"), _) => Box::new(FnObserver(move |x: &[f64], _| Ok(tuning_observe(x, seed, 0)))),
                (Some(s), _) => return Err(Error::config(format!("unknown surface {s:?}"))),
                (None, Some(p)) => {
                    let rep = load_dataset(p, &spec)?;
                    Box::new(ReplayObserver::new(
                        rep.x.iter().cloned().zip(rep.y.iter()).filter_map(|(x, y)| y.map(|y| (x, y))),
                    ))
                }
                (None, None) => return Err(Error::config("optimize needs --replay or a surface")),
            };
            let res = sequential_optimize(&pool, &mut cloud, cfg.optimize.budget, observer.as_mut(), &[])?;
            let mut header = vec!["step".to_string()];
            header.extend(names.iter().cloned());
            header.extend(["y", "ei", "predicted_mean", "y_best"].map(String::from));
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut t = Table::new(&h);
            for s in &res.history {
                let mut row = vec![s.step.to_string()];
                row.extend(s.x.iter().map(|&v| num(v)));
                row.extend([num(s.y), num(s.ei), num(s.predicted_mean), num(s.y_best)]);
                t.row(&row);
            }
            r.add("optimize.csv", t.finish());
            r.set("x_star", res.x_star.clone());
            r.set("predicted_mean", res.predicted_mean);
            r.set("evaluations", res.history.len() as i64);
            r.set("exhausted", res.exhausted);
        }
        Command::Priorsim => {
            let ps = &cfg.priorsim;
            let dim = ps.dim;
            let sampler = move |rng: &mut crate::rng::StreamRng| (0..dim).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
            let rep = prior_split_simulation(&ps.sizes, dim, &cfg.prior, cfg.prior.min_leaf, ps.reps, cfg.seed, &sampler);
            let mut t = Table::new(&["size", "mean_splits", "p_any"]);
            let avg = rep.averaged();
            for (size, m, p) in &avg {
                t.row(&[size.to_string(), num(*m), num(*p)]);
            }
            let mut d = Table::new(&["size", "dim", "mean_splits", "p_any"]);
            for (i, size) in rep.sizes.iter().enumerate() {
                for k in 0..dim {
                    d.row(&[size.to_string(), k.to_string(), num(rep.mean_splits[i][k]), num(rep.p_any[i][k])]);
                }
            }
            r.add("priorsim.csv", t.finish());
            r.add("priorsim_dims.csv", d.finish());
            if let Some(last) = avg.last() {
                r.set("p_any_largest", last.2);
            }
        }
        Command::ClassifyNa => {
            let ds = dataset(inputs, cfg)?;
            let labels = ds.failure_labels()?;
            let cloud_cfg = cfg.cloud(LeafModel::Multinomial { classes: 2 });
            let clouds = run_repetitions(&labels, &cloud_cfg, cfg.repetitions)?;
            let mut null_prior = cfg.prior.clone();
            null_prior.alpha = 0.0;
            let nulls = run_repetitions(&labels, &cloud_cfg.clone().with_prior(null_prior), cfg.repetitions)?;
            let rel = relevance(&clouds, None, cfg.select.method)?;
            let finals: Vec<f64> =
                clouds.iter().zip(&nulls).map(|(a, b)| bayes_factor(a, b).map(|t| t.final_log_bf())).collect::<Result<_>>()?;
            r.add("na_relevance.csv", relevance_table(&ds.predictor_names(), &rel));
            r.set("failures", labels.responses().iter().filter(|&&y| y == 1.0).count() as i64);
            r.set("p_positive", rel.p_positive.clone());
            r.set("final_log_bf_vs_null", finals.clone());
            r.set("null_preferred", finals.iter().filter(|&&f| f < 0.0).count() as i64);
        }
    }
    Ok(r)
}

fn predict_table(cloud: &ParticleCloud, pts: &Dataset) -> String {
    let classes = match cloud.config().model {
        LeafModel::Multinomial { classes } => classes,
        _ => 0,
    };
    let mut header = vec!["row".to_string()];
    if classes == 0 {
        header.extend(["mean", "variance", "mean_q05", "mean_q95"].map(String::from));
    } else {
        header.extend((0..classes).map(|k| format!("p{k}")));
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&h);
    for (i, x) in pts.x.iter().enumerate() {
        let pm = cloud.predict(x);
        let mut row = vec![(i + 1).to_string()];
        if classes == 0 {
            let means: Vec<f64> = pm.iter().map(PredictiveMoments::mean).collect();
            let n = means.len() as f64;
            let mu = means.iter().sum::<f64>() / n;
            let second = pm.iter().map(|p| p.moment_variance() + p.mean().powi(2)).sum::<f64>() / n;
            let q = quantiles(&means, &[0.05, 0.95]);
            row.extend([num(mu), num(second - mu * mu), num(q[0]), num(q[1])]);
        } else {
            let mut p = vec![0.0; classes];
            for m in &pm {
                if let PredictiveMoments::Classification { probs } = m {
                    for (a, b) in p.iter_mut().zip(probs) {
                        *a += b / pm.len() as f64;
                    }
                }
            }
            row.extend(p.iter().map(|&v| num(v)));
        }
        t.row(&row);
    }
    t.finish()
}

/// Run, write the report plus manifest into `out_dir`, and return both.
pub fn execute(cmd: &Command, cfg: &RunConfig, inputs: &Inputs, out_dir: &Path) -> Result<(Report, Manifest)> {
    let report = run(cmd, cfg, inputs)?;
    let digests = inputs
        .roles()
        .into_iter()
        .filter(|(_, p)| p.exists())
        .map(|(role, p)| Ok(InputDigest { role: role.into(), path: p.clone(), sha256: file_digest(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "dyntree".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.clone(),
        config: cfg.clone(),
        inputs: digests,
        outputs: report.outputs(),
    };
    report.write(out_dir, &manifest)?;
    Ok((report, manifest))
}

/// Rerun a manifest into `out_dir`; returns the names of outputs whose
/// digests differ from the recorded ones.
pub fn rerun(manifest: &Manifest, out_dir: &Path) -> Result<Vec<String>> {
    for d in &manifest.inputs {
        // `fit` may have written its own snapshot target; only read inputs must match.
        if d.role == "snapshot" && manifest.command == Command::Fit {
            continue;
        }
        let now = file_digest(&d.path)?;
        if now != d.sha256 {
            return Err(Error::Dataset(format!("{} changed since the manifest was written", d.path.display())));
        }
    }
    let mut inputs = Inputs::from_digests(&manifest.inputs);
    if manifest.command == Command::Fit {
        inputs.snapshot = None;
    }
    let (report, _) = execute(&manifest.command, &manifest.config, &inputs, out_dir)?;
    let now = report.outputs();
    Ok(manifest
        .outputs
        .iter()
        .filter(|o| !now.iter().any(|n| n.file == o.file && n.sha256 == o.sha256))
        .map(|o| o.file.clone())
        .collect())
}
