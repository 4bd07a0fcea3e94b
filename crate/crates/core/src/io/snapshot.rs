//! Versioned JSON snapshots of a particle cloud.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Observations;
use crate::error::{Error, Result};
use crate::smc::{CloudConfig, ParticleCloud};
use crate::tree::Tree;

pub const FORMAT: &str = "dyntree-cloud";
pub const FORMAT_VERSION: u32 = 1;

/// On-disk form. Particles that share a tree are stored once and indexed.
#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    config: CloudConfig,
    data: Observations,
    t_init: usize,
    /// Non-finite entries (fully degenerate steps) are written as null.
    trace: Vec<Option<f64>>,
    degenerate_steps: Vec<usize>,
    trees: Vec<Tree>,
    particle_tree: Vec<usize>,
}

pub fn to_json(cloud: &ParticleCloud) -> Result<String> {
    let mut trees: Vec<Tree> = Vec::new();
    let mut particle_tree = vec![0; cloud.len()];
    for (tree, members) in cloud.unique_trees() {
        for &i in &members {
            particle_tree[i] = trees.len();
        }
        trees.push(tree.clone());
    }
    let snap = Snapshot {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        config: cloud.config().clone(),
        data: cloud.data().clone(),
        t_init: cloud.t_init(),
        trace: cloud.trace().iter().map(|&v| v.is_finite().then_some(v)).collect(),
        degenerate_steps: cloud.degenerate_steps().to_vec(),
        trees,
        particle_tree,
    };
    Ok(serde_json::to_string(&snap)?)
}

pub fn from_json(text: &str) -> Result<ParticleCloud> {
    let snap: Snapshot = serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
    if snap.format != FORMAT {
        return Err(Error::Snapshot(format!("not a cloud snapshot (format {:?})", snap.format)));
    }
    if snap.version != FORMAT_VERSION {
        return Err(Error::Snapshot(format!("unsupported snapshot version {}", snap.version)));
    }
    let particles = snap
        .particle_tree
        .iter()
        .map(|&k| snap.trees.get(k).cloned().ok_or_else(|| Error::Snapshot(format!("tree index {k} out of range"))))
        .collect::<Result<Vec<_>>>()?;
    let trace = snap.trace.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
    let cloud = ParticleCloud::from_parts(snap.config, snap.data, particles, trace, snap.t_init, snap.degenerate_steps)?;
    let ctx = cloud.context();
    let support = cloud.support();
    for t in &snap.trees {
        t.check_invariants(&ctx, &support, 1e-6).map_err(|e| Error::Snapshot(format!("corrupt tree: {e}")))?;
    }
    Ok(cloud)
}

pub fn save(cloud: &ParticleCloud, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(to_json(cloud)?.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParticleCloud> {
    from_json(&std::fs::read_to_string(path)?)
}

/// Advisory lock held for the lifetime of the value: a `<snapshot>.lock`
/// file created exclusively and removed on drop.
#[derive(Debug)]
pub struct SnapshotLock {
    path: PathBuf,
}

impl SnapshotLock {
    pub fn acquire(snapshot: &Path) -> Result<Self> {
        let mut name = snapshot.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(SnapshotLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Snapshot(format!(
                "{} is locked by another run (remove {} if stale)",
                snapshot.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for SnapshotLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
