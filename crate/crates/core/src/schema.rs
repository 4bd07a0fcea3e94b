//! Column typing for datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    /// Real or integer valued, split on thresholds.
    OrdinalReal,
    /// 0/1 indicator, split at 0.5.
    CategoricalBinary,
    /// Finite level set; expanded into one binary indicator per level at ingestion.
    CategoricalK,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnRole {
    Predictor,
    Response,
    ClassLabel,
    Replicate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    Range { min: f64, max: f64 },
    Levels(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
    pub support: Support,
}

impl ColumnSchema {
    pub fn ordinal(name: impl Into<String>, min: f64, max: f64) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::OrdinalReal,
            role: ColumnRole::Predictor,
            support: Support::Range { min, max },
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::CategoricalBinary,
            role: ColumnRole::Predictor,
            support: Support::Range { min: 0.0, max: 1.0 },
        }
    }

    pub fn is_categorical(&self) -> bool {
        !matches!(self.kind, ColumnKind::OrdinalReal)
    }

    /// Numeric interval covered by the column (levels map to `0..k-1`).
    pub fn interval(&self) -> (f64, f64) {
        match &self.support {
            Support::Range { min, max } => (*min, *max),
            Support::Levels(l) => (0.0, l.len().saturating_sub(1) as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.support {
            Support::Range { min, max } if !(min <= max) => {
                Err(Error::Dataset(format!("column {}: empty range [{min}, {max}]", self.name)))
            }
            Support::Levels(l) if l.is_empty() => {
                Err(Error::Dataset(format!("column {}: no categorical levels", self.name)))
            }
            _ => Ok(()),
        }
    }
}

/// Predictor columns only, in design order.
pub fn predictor_supports(cols: &[ColumnSchema]) -> Vec<(f64, f64)> {
    cols.iter().filter(|c| c.role == ColumnRole::Predictor).map(ColumnSchema::interval).collect()
}
