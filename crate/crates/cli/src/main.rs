use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyntree::io::config::{LeafChoice, RestrictSpec, RunConfig};
use dyntree::io::dataset::{load_dataset, SchemaSpec};
use dyntree::io::workflow::{execute, rerun, Command, Inputs};
use dyntree::io::Manifest;
use dyntree::Error;

#[derive(Parser)]
#[command(name = "dyntree", version, about = "Dynamic trees for sequential design, variable selection and sensitivity analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a particle cloud and write a snapshot
    Fit(Common),
    /// Append new rows to a snapshot's cloud
    Update(Common),
    /// Predictive summaries at `--points`
    Predict(Common),
    /// Posterior relevance probabilities P(J > 0)
    Relevance(Common),
    /// Backward variable selection
    Select(Common),
    /// Bayes factor of a model against the same model without `--drop`
    Bayesfactor {
        #[command(flatten)]
        common: Common,
        /// Inputs of the larger model (default: all)
        #[arg(long, value_delimiter = ',')]
        keep: Vec<String>,
        /// Inputs removed in the smaller model
        #[arg(long, value_delimiter = ',', required = true)]
        drop: Vec<String>,
    },
    /// First-order and total sensitivity indices
    Sensitivity(Common),
    /// Main-effect curves
    Maineffects(Common),
    /// Maximin space-filling subsample of `--data`
    Subsample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Expected-improvement search over `--points`
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Built-in response surface instead of `--replay` (available: tuning)
        #[arg(long)]
        surface: Option<String>,
    },
    /// Prior split probabilities by sample size
    Priorsim(Common),
    /// Relevance of inputs for missing (NA) responses
    ClassifyNa(Common),
    /// Print the typed schema of `--data`
    Describe(Common),
    /// Rerun a manifest and compare output digests
    Rerun {
        manifest: PathBuf,
        #[arg(long, default_value = "rerun")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// TOML run configuration; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// constant, linear or multinomial
    #[arg(long)]
    leaf: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Sensitivity design size
    #[arg(long)]
    m: Option<usize>,
    /// dim=lo:hi or dim=value; repeatable
    #[arg(long)]
    restrict: Vec<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Prediction points or optimisation candidates
    #[arg(long)]
    points: Option<PathBuf>,
    /// Recorded measurements answering optimisation queries
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Model the log of the response
    #[arg(long)]
    log_response: bool,
}

impl Common {
    fn config(&self, cmd: &Command) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.particles {
            c.particles = v;
        }
        if let Some(v) = self.repetitions {
            c.repetitions = v;
        }
        if let Some(v) = &self.leaf {
            c.leaf = v.parse::<LeafChoice>()?;
        }
        if let Some(v) = self.threshold {
            c.select.threshold = v;
        }
        if let Some(v) = self.m {
            c.sensitivity.m = Some(v);
        }
        if let Some(v) = self.budget {
            c.optimize.budget = v;
        }
        if self.log_response {
            c.log_response = true;
        }
        if !self.restrict.is_empty() {
            let r = self.restrict.iter().map(|s| s.parse::<RestrictSpec>()).collect::<Result<Vec<_>, _>>()?;
            match cmd {
                Command::Optimize { .. } => c.optimize.constraints = r,
                _ => c.sensitivity.restrict = r,
            }
        }
        c.validate()?;
        Ok(c)
    }

    fn inputs(&self) -> Inputs {
        Inputs {
            data: self.data.clone(),
            schema: self.schema.clone(),
            snapshot: self.snapshot.clone(),
            points: self.points.clone(),
            replay: self.replay.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<u8, Error> {
    let (command, common) = match cmd {
        Cmd::Fit(c) => (Command::Fit, c),
        Cmd::Update(c) => (Command::Update, c),
        Cmd::Predict(c) => (Command::Predict, c),
        Cmd::Relevance(c) => (Command::Relevance, c),
        Cmd::Select(c) => (Command::Select, c),
        Cmd::Bayesfactor { common, keep, drop } => (Command::Bayesfactor { keep, drop }, common),
        Cmd::Sensitivity(c) => (Command::Sensitivity, c),
        Cmd::Maineffects(c) => (Command::Maineffects, c),
        Cmd::Subsample { common, size } => {
            let mut c = common.config(&Command::Subsample)?;
            if let Some(s) = size {
                c.subsample.size = s;
            }
            return finish(&Command::Subsample, &c, &common);
        }
        Cmd::Optimize { common, surface } => (Command::Optimize { surface }, common),
        Cmd::Priorsim(c) => (Command::Priorsim, c),
        Cmd::ClassifyNa(c) => (Command::ClassifyNa, c),
        Cmd::Describe(c) => {
            let spec = SchemaSpec::load(c.schema.as_deref().ok_or_else(|| Error::config("--schema is required"))?)?;
            let ds = load_dataset(c.data.as_deref().ok_or_else(|| Error::config("--data is required"))?, &spec)?;
            print!("{}", ds.describe());
            println!("{} rows, {} with missing response", ds.len(), ds.y.iter().filter(|y| y.is_none()).count());
            return Ok(0);
        }
        Cmd::Rerun { manifest, out_dir } => {
            let m = Manifest::load(&manifest)?;
            let diff = rerun(&m, &out_dir)?;
            if diff.is_empty() {
                println!("reproduced {} outputs in {}", m.outputs.len(), out_dir.display());
                return Ok(0);
            }
            eprintln!("outputs differ from the manifest: {}", diff.join(", "));
            return Ok(3);
        }
    };
    let cfg = common.config(&command)?;
    finish(&command, &cfg, &common)
}

fn finish(command: &Command, cfg: &RunConfig, common: &Common) -> Result<u8, Error> {
    let (report, _) = execute(command, cfg, &common.inputs(), &common.out_dir)?;
    print!("{}", report.summary_text());
    Ok(0)
}
