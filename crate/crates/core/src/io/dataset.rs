//! Delimited-text datasets typed by a TOML schema.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Observations;
use crate::error::{Error, Result};
use crate::schema::{ColumnKind, ColumnRole, ColumnSchema, Support};

fn default_na() -> String {
    "NA".into()
}

/// One declared input column. Supports are optional; when given, observed
/// values must lie inside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseKind {
    #[default]
    Real,
    Class,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub name: String,
    #[serde(default)]
    pub kind: ResponseKind,
    /// Class levels in index order; inferred (sorted) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

/// Schema file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    #[serde(default = "default_na")]
    pub na: String,
    pub response: ResponseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate: Option<String>,
    pub inputs: Vec<InputSpec>,
}

impl SchemaSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Typed rows. Predictors are fully numeric (categorical-k expanded into
/// indicators); responses may be missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Predictor columns after expansion, then the response column.
    pub columns: Vec<ColumnSchema>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Option<f64>>,
    pub replicate: Option<Vec<String>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn predictors(&self) -> &[ColumnSchema] {
        &self.columns[..self.dim()]
    }

    pub fn response(&self) -> &ColumnSchema {
        self.columns.last().expect("response column")
    }

    pub fn predictor_names(&self) -> Vec<String> {
        self.predictors().iter().map(|c| c.name.clone()).collect()
    }

    /// Number of response classes (0 for real responses).
    pub fn classes(&self) -> usize {
        match &self.response().support {
            Support::Levels(l) if self.response().role == ColumnRole::ClassLabel => l.len(),
            _ => 0,
        }
    }

    /// Indices of ordinal predictors.
    pub fn ordinal_dims(&self) -> Vec<usize> {
        self.predictors().iter().enumerate().filter(|(_, c)| !c.is_categorical()).map(|(i, _)| i).collect()
    }

    /// Observations; fails if any response is missing.
    pub fn observations(&self) -> Result<Observations> {
        let mut obs = Observations::with_capacity(self.dim(), self.len());
        for (i, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
            let y = y.ok_or_else(|| Error::Data { row: i + 1, message: "missing response".into() })?;
            obs.push(x, y)?;
        }
        Ok(obs)
    }

    /// Binary labels: class 1 ("fail") where the response is missing, 0 ("ok") otherwise.
    pub fn failure_labels(&self) -> Result<Observations> {
        let mut obs = Observations::with_capacity(self.dim(), self.len());
        for (x, y) in self.x.iter().zip(&self.y) {
            obs.push(x, if y.is_none() { 1.0 } else { 0.0 })?;
        }
        Ok(obs)
    }

    /// Natural log of every present response; fails on non-positive values.
    pub fn log_response(&self) -> Result<Dataset> {
        let mut d = self.clone();
        for (i, v) in d.y.iter_mut().enumerate() {
            if let Some(y) = v {
                if *y <= 0.0 {
                    return Err(Error::Data { row: i + 1, message: format!("log of non-positive response {y}") });
                }
                *y = y.ln();
            }
        }
        Ok(d)
    }

    /// Keep only rows whose replicate id is in `keep`.
    pub fn filter_replicates(&self, keep: &[String]) -> Result<Dataset> {
        let reps = self.replicate.as_ref().ok_or_else(|| Error::Dataset("no replicate column".into()))?;
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep.contains(&reps[i])).collect();
        Ok(self.subset(&rows))
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            replicate: self.replicate.as_ref().map(|r| rows.iter().map(|&i| r[i].clone()).collect()),
        }
    }

    /// One line per predictor.
    pub fn describe(&self) -> String {
        let ordinal = self.ordinal_dims().len();
        let mut out = format!(
            "{} inputs: {} ordinal, {} binary; response {}\n",
            self.dim(),
            ordinal,
            self.dim() - ordinal,
            self.response().name
        );
        for (k, c) in self.predictors().iter().enumerate() {
            let (lo, hi) = c.interval();
            let integral = self.x.iter().all(|r| r[k].fract() == 0.0);
            let kind = match c.kind {
                ColumnKind::OrdinalReal if integral => format!("ordinal, integer values in {{{lo}..{hi}}}"),
                ColumnKind::OrdinalReal => format!("ordinal, range [{lo}, {hi}]"),
                _ => "binary".to_string(),
            };
            out.push_str(&format!("  {}: {}\n", c.name, kind));
        }
        out
    }
}

/// Read a CSV file against `spec`.
pub fn load_dataset(path: &Path, spec: &SchemaSpec) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    parse_dataset(f, spec)
}

/// Expansion of one declared input into predictor columns.
enum Slot {
    Numeric { col: usize, binary: bool },
    Levels { col: usize, levels: Vec<String> },
}

pub fn parse_dataset<R: Read>(reader: R, spec: &SchemaSpec) -> Result<Dataset> {
    parse_with(reader, spec, true)
}

/// Input configurations only (prediction points, candidate pools). The
/// response column may be absent; categorical-k inputs need declared levels
/// so the indicator layout matches the training data.
pub fn parse_inputs<R: Read>(reader: R, spec: &SchemaSpec) -> Result<Dataset> {
    if let Some(i) = spec.inputs.iter().find(|i| i.kind == ColumnKind::CategoricalK && i.levels.is_none()) {
        return Err(Error::config(format!("column {}: declare levels to read input-only files", i.name)));
    }
    parse_with(reader, spec, false)
}

pub fn load_inputs(path: &Path, spec: &SchemaSpec) -> Result<Dataset> {
    parse_inputs(std::fs::File::open(path)?, spec)
}

fn parse_with<R: Read>(reader: R, spec: &SchemaSpec, need_response: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let pos: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str| pos.get(name).copied().ok_or_else(|| Error::Dataset(format!("column {name} not in header")));
    let resp_col = if need_response { Some(find(&spec.response.name)?) } else { pos.get(spec.response.name.as_str()).copied() };
    let rep_col = match spec.replicate.as_deref() {
        Some(r) if need_response => Some(find(r)?),
        Some(r) => pos.get(r).copied(),
        None => None,
    };
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Data { row: i + 1, message: e.to_string() }))
        .collect::<Result<_>>()?;
    for (i, r) in records.iter().enumerate() {
        if r.len() != header.len() {
            return Err(Error::Data {
                row: i + 1,
                message: format!("expected {} fields, found {}", header.len(), r.len()),
            });
        }
    }

    let mut slots = Vec::new();
    for inp in &spec.inputs {
        let col = find(&inp.name)?;
        slots.push(match inp.kind {
            ColumnKind::OrdinalReal => Slot::Numeric { col, binary: false },
            ColumnKind::CategoricalBinary => Slot::Numeric { col, binary: true },
            ColumnKind::CategoricalK => {
                let levels = match &inp.levels {
                    Some(l) if !l.is_empty() => l.clone(),
                    Some(_) => return Err(Error::Dataset(format!("column {}: empty level list", inp.name))),
                    None => {
                        let mut l: Vec<String> = records.iter().map(|r| r[col].to_string()).collect();
                        l.sort();
                        l.dedup();
                        l
                    }
                };
                Slot::Levels { col, levels }
            }
        });
    }

    let mut x = vec![Vec::new(); records.len()];
    let mut columns = Vec::new();
    for (inp, slot) in spec.inputs.iter().zip(&slots) {
        match slot {
            Slot::Numeric { col, binary } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (i, r) in records.iter().enumerate() {
                    let v: f64 = r[*col].parse().map_err(|_| Error::Data {
                        row: i + 1,
                        message: format!("column {}: not a number: {:?}", inp.name, &r[*col]),
                    })?;
                    if !v.is_finite() || (*binary && v != 0.0 && v != 1.0) {
                        return Err(Error::Data { row: i + 1, message: format!("column {}: invalid value {v}", inp.name) });
                    }
                    if inp.min.is_some_and(|m| v < m) || inp.max.is_some_and(|m| v > m) {
                        return Err(Error::Data { row: i + 1, message: format!("column {}: {v} outside declared support", inp.name) });
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                    x[i].push(v);
                }
                let mut c = if *binary {
                    ColumnSchema::binary(&inp.name)
                } else {
                    let (a, b) = if records.is_empty() { (0.0, 0.0) } else { (lo, hi) };
                    ColumnSchema::ordinal(&inp.name, inp.min.unwrap_or(a), inp.max.unwrap_or(b))
                };
                c.validate()?;
                c.role = ColumnRole::Predictor;
                columns.push(c);
            }
            Slot::Levels { col, levels } => {
                let index: BTreeMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                for (i, r) in records.iter().enumerate() {
                    let k = *index.get(&r[*col]).ok_or_else(|| Error::Data {
                        row: i + 1,
                        message: format!("column {}: unknown level {:?}", inp.name, &r[*col]),
                    })?;
                    x[i].extend((0..levels.len()).map(|j| if j == k { 1.0 } else { 0.0 }));
                }
                columns.extend(levels.iter().map(|l| ColumnSchema::binary(format!("{}={}", inp.name, l))));
            }
        }
    }

    let (y, resp_schema) = match spec.response.kind {
        ResponseKind::Real => {
            let y = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let Some(c) = resp_col else { return Ok(None) };
                    let s = &r[c];
                    if s == spec.na {
                        return Ok(None);
                    }
                    match s.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(Some(v)),
                        _ => Err(Error::Data { row: i + 1, message: format!("response: not a number: {s:?}") }),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let (lo, hi) = y.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let mut c = ColumnSchema::ordinal(&spec.response.name, lo.min(hi), hi.max(lo));
            if !lo.is_finite() {
                c.support = Support::Range { min: 0.0, max: 0.0 };
            }
            c.role = ColumnRole::Response;
            (y, c)
        }
        ResponseKind::Class => {
            let levels = spec.response.levels.clone().unwrap_or_else(|| {
                let mut l: Vec<String> =
                    records.iter().filter_map(|r| resp_col.map(|c| r[c].to_string())).filter(|s| *s != spec.na).collect();
                l.sort();
                l.dedup();
                l
            });
            let y = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let Some(c) = resp_col else { return Ok(None) };
                    let s = &r[c];
                    if s == spec.na {
                        return Ok(None);
                    }
                    levels.iter().position(|l| l == s).map(|k| Some(k as f64)).ok_or_else(|| Error::Data {
                        row: i + 1,
                        message: format!("response: unknown class {s:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let c = ColumnSchema {
                name: spec.response.name.clone(),
                kind: ColumnKind::CategoricalK,
                role: ColumnRole::ClassLabel,
                support: Support::Levels(levels),
            };
            (y, c)
        }
    };
    columns.push(resp_schema);
    let replicate = rep_col.map(|c| records.iter().map(|r| r[c].to_string()).collect());
    Ok(Dataset { columns, x, y, replicate })
}

/// Maps replicate ids to a new 0/1 indicator; ids listed in `drop` are removed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRule {
    pub name: String,
    #[serde(default)]
    pub zero: Vec<String>,
    #[serde(default)]
    pub one: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
}

/// Append the rule's indicator as a new binary predictor.
pub fn augment_indicator(ds: &Dataset, rule: &IndicatorRule) -> Result<Dataset> {
    let reps = ds.replicate.as_ref().ok_or_else(|| Error::Dataset("no replicate column".into()))?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (i, id) in reps.iter().enumerate() {
        if rule.zero.contains(id) {
            rows.push(i);
            values.push(0.0);
        } else if rule.one.contains(id) {
            rows.push(i);
            values.push(1.0);
        } else if !rule.drop.contains(id) {
            return Err(Error::Data { row: i + 1, message: format!("indicator rule does not cover replicate {id:?}") });
        }
    }
    if rows.is_empty() {
        return Err(Error::Dataset("indicator rule dropped every row".into()));
    }
    let mut out = ds.subset(&rows);
    for (r, v) in out.x.iter_mut().zip(values) {
        r.push(v);
    }
    let resp = out.columns.pop().expect("response column");
    out.columns.push(ColumnSchema::binary(&rule.name));
    out.columns.push(resp);
    Ok(out)
}
