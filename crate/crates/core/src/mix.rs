//! Combining two SP datasets for joint training.
//!
//! `unified` shuffles the union into one dataset; `serial` keeps them apart as
//! an ordered two-stage schedule. Both emit a manifest listing the stage files
//! with their SHA-256 digests.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{sha256_hex, to_json_bytes, write_atomic};
use crate::reduction::SpDataset;
use crate::squad::serialize_squad;

pub const DEFAULT_SEED: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixMode {
    Unified,
    Serial,
}

fn check_disjoint(a: &SpDataset, b: &SpDataset) -> Result<()> {
    let in_a: HashSet<&str> = a.qids().collect();
    match b.qids().find(|q| in_a.contains(q)) {
        Some(q) => Err(Error::QidCollision(q.to_string())),
        None => Ok(()),
    }
}

fn joined_source(a: &SpDataset, b: &SpDataset) -> String {
    format!("{}+{}", a.source, b.source)
}

/// Seeded uniform shuffle of `a ∪ b`. The same seed always gives the same order.
pub fn mix_unified(a: &SpDataset, b: &SpDataset, seed: u64) -> Result<SpDataset> {
    check_disjoint(a, b)?;
    let mut instances: Vec<_> = a.instances.iter().chain(&b.instances).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    instances.shuffle(&mut rng);
    Ok(SpDataset {
        instances,
        variant: if a.variant == b.variant { a.variant } else { None },
        source: joined_source(a, b),
    })
}

/// Two-stage schedule: train on `stage1` first, then continue on `stage2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerialMix {
    pub stage1: SpDataset,
    pub stage2: SpDataset,
    pub warnings: Vec<String>,
}

/// Stages may overlap, including being the same dataset; that is left to the caller.
pub fn mix_serial(a: &SpDataset, b: &SpDataset) -> SerialMix {
    let mut warnings = Vec::new();
    if a.is_empty() {
        tracing::warn!("serial mix: stage 1 is empty");
        warnings.push("stage 1 is empty".to_string());
    }
    if b.is_empty() {
        tracing::warn!("serial mix: stage 2 is empty");
        warnings.push("stage 2 is empty".to_string());
    }
    SerialMix {
        stage1: a.clone(),
        stage2: b.clone(),
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestStage {
    pub stage: usize,
    pub path: String,
    pub sha256: String,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixManifest {
    pub version: u32,
    pub mode: MixMode,
    pub seed: u64,
    pub stages: Vec<ManifestStage>,
    pub warnings: Vec<String>,
}

fn write_stage(dir: &Path, file: &str, stage: usize, ds: &SpDataset) -> Result<ManifestStage> {
    let bytes = serialize_squad(ds);
    write_atomic(dir.join(file), &bytes)?;
    Ok(ManifestStage {
        stage,
        path: file.to_string(),
        sha256: sha256_hex(&bytes),
        instances: ds.len(),
    })
}

/// Writes `mixed.json` and `manifest.json` into `dir`.
pub fn write_unified(dir: &Path, mixed: &SpDataset, seed: u64) -> Result<MixManifest> {
    let manifest = MixManifest {
        version: 1,
        mode: MixMode::Unified,
        seed,
        stages: vec![write_stage(dir, "mixed.json", 1, mixed)?],
        warnings: Vec::new(),
    };
    write_atomic(dir.join("manifest.json"), &to_json_bytes(&manifest))?;
    Ok(manifest)
}

/// Writes `stage1.json`, `stage2.json` and `manifest.json` into `dir`.
pub fn write_serial(dir: &Path, mix: &SerialMix, seed: u64) -> Result<MixManifest> {
    let manifest = MixManifest {
        version: 1,
        mode: MixMode::Serial,
        seed,
        stages: vec![
            write_stage(dir, "stage1.json", 1, &mix.stage1)?,
            write_stage(dir, "stage2.json", 2, &mix.stage2)?,
        ],
        warnings: mix.warnings.clone(),
    };
    write_atomic(dir.join("manifest.json"), &to_json_bytes(&manifest))?;
    Ok(manifest)
}
