//! Report files and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::config::RunConfig;
use crate::io::workflow::Command;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// In-memory output of one workflow run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    pub summary: toml::Table,
}

impl Report {
    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn set(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn summary_text(&self) -> String {
        toml::to_string(&self.summary).expect("summary serializes")
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    /// Every file plus `summary.toml`, with digests.
    pub fn outputs(&self) -> Vec<OutputDigest> {
        let mut v: Vec<OutputDigest> =
            self.files.iter().map(|(n, c)| OutputDigest { file: n.clone(), sha256: sha256_hex(c.as_bytes()) }).collect();
        v.push(OutputDigest { file: "summary.toml".into(), sha256: sha256_hex(self.summary_text().as_bytes()) });
        v
    }

    /// Write the report and its manifest into `dir`.
    pub fn write(&self, dir: &Path, manifest: &Manifest) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, contents)?;
            written.push(p);
        }
        let p = dir.join("summary.toml");
        std::fs::write(&p, self.summary_text())?;
        written.push(p);
        let p = dir.join("manifest.json");
        std::fs::write(&p, serde_json::to_string_pretty(manifest)?)?;
        written.push(p);
        Ok(written)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to rerun a workflow bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<OutputDigest>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::config(format!("{}: not a manifest: {e}", path.display())))
    }
}

/// Comma-separated table builder.
pub(crate) struct Table {
    out: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut out = header.join(",");
        out.push('\n');
        Table { out }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Shortest round-trip float text; non-finite values as `NA`.
pub(crate) fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".into()
    }
}
