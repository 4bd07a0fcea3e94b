//! Run configuration with defaults for every workflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leaf::LeafModel;
use crate::sensitivity::Restriction;
use crate::smc::CloudConfig;
use crate::tree::TreePrior;
use crate::varsel::DeltaMethod;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafChoice {
    #[default]
    Constant,
    Linear,
    Multinomial,
}

impl std::str::FromStr for LeafChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LeafChoice::Constant),
            "linear" => Ok(LeafChoice::Linear),
            "multinomial" => Ok(LeafChoice::Multinomial),
            _ => Err(Error::config(format!("unknown leaf model {s:?}"))),
        }
    }
}

/// `dim=lo:hi` or `dim=value`; `dim` is a 0-based index or a column name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RestrictSpec {
    pub dim: String,
    pub restriction: Restriction,
}

impl std::str::FromStr for RestrictSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("restriction {s:?} is not dim=lo:hi or dim=value"));
        let (dim, rhs) = s.split_once('=').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let restriction = match rhs.split_once(':') {
            Some((lo, hi)) => Restriction::Range { lo: num(lo)?, hi: num(hi)? },
            None => Restriction::Value(num(rhs)?),
        };
        Ok(RestrictSpec { dim: dim.trim().to_string(), restriction })
    }
}

impl TryFrom<String> for RestrictSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RestrictSpec> for String {
    fn from(r: RestrictSpec) -> String {
        r.to_string()
    }
}

impl std::fmt::Display for RestrictSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.restriction {
            Restriction::Range { lo, hi } => write!(f, "{}={lo}:{hi}", self.dim),
            Restriction::Value(v) => write!(f, "{}={v}", self.dim),
        }
    }
}

impl RestrictSpec {
    /// Resolve `dim` against predictor names.
    pub fn index(&self, names: &[String]) -> Result<usize> {
        if let Some(i) = names.iter().position(|n| *n == self.dim) {
            return Ok(i);
        }
        match self.dim.parse::<usize>() {
            Ok(i) if i < names.len() => Ok(i),
            _ => Err(Error::config(format!("unknown input {:?} in restriction", self.dim))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSettings {
    pub threshold: f64,
    pub max_rounds: usize,
    pub method: DeltaMethod,
}

impl Default for SelectSettings {
    fn default() -> Self {
        SelectSettings { threshold: 0.5, max_rounds: 10, method: DeltaMethod::CountApprox }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySettings {
    /// Design size; 1000 when unset.
    pub m: Option<usize>,
    pub restrict: Vec<RestrictSpec>,
    /// Odd main-effect smoothing window in design points; derived from `m` when unset.
    pub window: Option<usize>,
}

impl SensitivitySettings {
    pub fn design_size(&self) -> usize {
        self.m.unwrap_or(1000)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSettings {
    pub budget: usize,
    /// Candidate filters; the evaluation set obeys them too.
    pub constraints: Vec<RestrictSpec>,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        OptimizeSettings { budget: 100, constraints: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsampleSettings {
    pub size: usize,
    /// Distance weight per predictor; all ones when empty.
    pub weights: Vec<f64>,
}

impl Default for SubsampleSettings {
    fn default() -> Self {
        SubsampleSettings { size: 500, weights: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSimSettings {
    pub sizes: Vec<usize>,
    pub dim: usize,
    pub reps: usize,
}

impl Default for PriorSimSettings {
    fn default() -> Self {
        PriorSimSettings { sizes: vec![10, 20, 50, 100, 200, 500, 1000], dim: 10, reps: 1000 }
    }
}

/// Everything a workflow needs besides its input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub leaf: LeafChoice,
    /// Linear-leaf regressors by name or index; all ordinal inputs when empty.
    pub active: Vec<String>,
    pub particles: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub log_response: bool,
    pub prior: TreePrior,
    pub select: SelectSettings,
    pub sensitivity: SensitivitySettings,
    pub optimize: OptimizeSettings,
    pub subsample: SubsampleSettings,
    pub priorsim: PriorSimSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            leaf: LeafChoice::Constant,
            active: Vec::new(),
            particles: 1000,
            repetitions: 5,
            seed: 42,
            log_response: false,
            prior: TreePrior::default(),
            select: SelectSettings::default(),
            sensitivity: SensitivitySettings::default(),
            optimize: OptimizeSettings::default(),
            subsample: SubsampleSettings::default(),
            priorsim: PriorSimSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.particles == 0 {
            return Err(Error::config("particles must be positive"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be positive"));
        }
        if !(0.0..1.0).contains(&self.select.threshold) {
            return Err(Error::config("selection threshold must lie in [0, 1)"));
        }
        if self.sensitivity.design_size() < 2 {
            return Err(Error::config("sensitivity design size must be at least 2"));
        }
        Ok(())
    }

    /// Leaf model for a dataset with the given predictor names, ordinal
    /// dimensions and class count.
    pub fn leaf_model(&self, names: &[String], ordinal: &[usize], classes: usize) -> Result<LeafModel> {
        Ok(match self.leaf {
            LeafChoice::Constant => LeafModel::Constant,
            LeafChoice::Multinomial => {
                if classes < 2 {
                    return Err(Error::config("multinomial leaves need a class response with at least two levels"));
                }
                LeafModel::Multinomial { classes }
            }
            LeafChoice::Linear => {
                let active = if self.active.is_empty() {
                    ordinal.to_vec()
                } else {
                    self.active
                        .iter()
                        .map(|a| RestrictSpec { dim: a.clone(), restriction: Restriction::Value(0.0) }.index(names))
                        .collect::<Result<Vec<_>>>()?
                };
                LeafModel::Linear { active }
            }
        })
    }

    pub fn cloud(&self, model: LeafModel) -> CloudConfig {
        CloudConfig::new(model, self.particles, self.seed).with_prior(self.prior.clone())
    }
}
