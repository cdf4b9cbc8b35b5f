//! On-disk layout of a synthetic dataset directory:
//!
//! ```text
//! manifest.json             format version, class table, generating config, splits
//! <split>.scenes.json       ground-truth scenes
//! <split>.proposals.jsonl   one proposal per line
//! <split>.stats.json        class statistics of the split
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_stats, ProposalBatch, Scene, StatsFile, SynthConfig, SyntheticSplit};
use crate::classes::ClassTable;
use crate::error::{invalid_input, Error, Result};
use crate::provenance::{read_bytes, read_json, write_atomic, write_json, Metadata};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub name: String,
    pub num_images: usize,
    pub seed: u64,
    pub num_proposals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub classes: ClassTable,
    pub feature_dim: usize,
    pub config: SynthConfig,
    pub splits: Vec<SplitInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

/// A dataset directory loaded into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub splits: Vec<(String, SyntheticSplit)>,
}

impl SyntheticDataset {
    pub fn new(config: SynthConfig, splits: Vec<(String, SyntheticSplit)>) -> Result<Self> {
        let classes = config.class_table()?;
        let infos = splits
            .iter()
            .enumerate()
            .map(|(i, (name, s))| SplitInfo {
                name: name.clone(),
                num_images: s.scenes.len(),
                seed: super::split_seed(config.seed, i),
                num_proposals: s.proposals.len(),
            })
            .collect();
        Ok(Self {
            manifest: DatasetManifest {
                format_version: DATASET_FORMAT_VERSION,
                classes,
                feature_dim: config.feature_dim,
                config,
                splits: infos,
                metadata: None,
            },
            splits,
        })
    }

    pub fn split(&self, name: &str) -> Result<&SyntheticSplit> {
        self.splits
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| invalid_input(format!("dataset has no split `{name}`")))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, split) in &self.splits {
            write_json(&dir.join(format!("{name}.scenes.json")), &split.scenes)?;
            write_proposals(&dir.join(format!("{name}.proposals.jsonl")), &split.proposals)?;
            let stats = compute_stats(&split.scenes, &self.manifest.classes)?;
            write_json(&dir.join(format!("{name}.stats.json")), &StatsFile::new(name, stats, None))?;
        }
        write_json(&dir.join("manifest.json"), &self.manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "dataset manifest",
                found: manifest.format_version,
                expected: DATASET_FORMAT_VERSION,
            });
        }
        let mut splits = Vec::new();
        for info in &manifest.splits {
            let scenes: Vec<Scene> = read_json(&dir.join(format!("{}.scenes.json", info.name)))?;
            let proposals = read_proposals(
                &dir.join(format!("{}.proposals.jsonl", info.name)),
                manifest.feature_dim,
            )?;
            proposals.validate(Some(&manifest.classes))?;
            splits.push((info.name.clone(), SyntheticSplit { scenes, proposals }));
        }
        Ok(Self { manifest, splits })
    }
}

pub fn write_proposals(path: &Path, batch: &ProposalBatch) -> Result<()> {
    let mut buf = Vec::new();
    for p in &batch.proposals {
        serde_json::to_writer(&mut buf, p)?;
        buf.write_all(b"\n")?;
    }
    write_atomic(path, &buf)
}

pub fn read_proposals(path: &Path, feature_dim: usize) -> Result<ProposalBatch> {
    let bytes = read_bytes(path)?;
    let mut proposals = Vec::new();
    for (i, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        proposals.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            record: i,
            message: e.to_string(),
        })?);
    }
    ProposalBatch::new(feature_dim, proposals)
}
