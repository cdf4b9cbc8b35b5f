//! Scenes, annotation parsing, class statistics and the synthetic long-tail
//! proposal generator.

mod labels;
mod store;
mod synth;

use serde::{Deserialize, Serialize};

pub use labels::{parse_labels, parse_labels_str, LabelFormat, ParsedLabels, SkipReport};
pub use store::{read_proposals, write_proposals, DatasetManifest, SplitInfo, SyntheticDataset, DATASET_FORMAT_VERSION};
pub use synth::{generate_splits, generate_synthetic, split_seed, SynthConfig, SyntheticSplit};

use crate::boxes::BoundingBox;
use crate::classes::ClassTable;
use crate::error::{invalid_input, Error, Result};
use crate::provenance::Metadata;
use crate::weights::ClassStats;

/// Virtual frame size used when a source carries no image dimensions.
pub const DEFAULT_IMAGE_WIDTH: f64 = 1280.0;
pub const DEFAULT_IMAGE_HEIGHT: f64 = 720.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Foreground class index; never 0.
    pub class_index: usize,
}

/// One annotated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub image_id: String,
    pub image_width: f64,
    pub image_height: f64,
    pub objects: Vec<GroundTruthObject>,
}

/// A candidate region for the proposal classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub image_id: String,
    /// Class index, 0 for background.
    pub label: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub features: Vec<f64>,
}

/// Proposals with homogeneous feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalBatch {
    pub feature_dim: usize,
    pub proposals: Vec<Proposal>,
}

impl ProposalBatch {
    pub fn new(feature_dim: usize, proposals: Vec<Proposal>) -> Result<Self> {
        let batch = Self {
            feature_dim,
            proposals,
        };
        batch.validate(None)?;
        Ok(batch)
    }

    pub fn validate(&self, classes: Option<&ClassTable>) -> Result<()> {
        for (i, p) in self.proposals.iter().enumerate() {
            if p.features.len() != self.feature_dim {
                return Err(invalid_input(format!(
                    "proposal {i} has {} features, expected {}",
                    p.features.len(),
                    self.feature_dim
                )));
            }
            if let Some(c) = classes {
                if p.label >= c.len() {
                    return Err(invalid_input(format!("proposal {i} has invalid label {}", p.label)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.proposals.iter().map(|p| p.label).collect()
    }

    pub fn num_foreground(&self) -> usize {
        self.proposals.iter().filter(|p| p.label != 0).count()
    }

    /// Splits into consecutive chunks of at most `size` proposals.
    pub fn chunks(&self, size: usize) -> Vec<ProposalBatch> {
        self.proposals
            .chunks(size.max(1))
            .map(|c| ProposalBatch {
                feature_dim: self.feature_dim,
                proposals: c.to_vec(),
            })
            .collect()
    }
}

/// Per-class instance counts over a set of scenes.
pub fn compute_stats(scenes: &[Scene], classes: &ClassTable) -> Result<ClassStats> {
    if scenes.is_empty() {
        return Err(Error::EmptyDataset("no scenes".into()));
    }
    let mut counts = vec![0u64; classes.len()];
    for scene in scenes {
        for obj in &scene.objects {
            if obj.class_index == 0 || obj.class_index >= classes.len() {
                return Err(invalid_input(format!(
                    "scene `{}` has invalid class index {}",
                    scene.image_id, obj.class_index
                )));
            }
            counts[obj.class_index] += 1;
        }
    }
    ClassStats::from_counts(
        scenes.len() as u64,
        classes.foreground().iter().map(String::as_str).zip(counts[1..].iter().copied()),
    )
}

pub const STATS_FILE_VERSION: u32 = 1;

/// Stats document: counts, frequencies and what was skipped while parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub format_version: u32,
    /// Name of the split the statistics cover.
    pub split: String,
    #[serde(flatten)]
    pub stats: ClassStats,
    /// Classes with no instances at all; weight schemes reject these.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent_classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<SkipReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

impl StatsFile {
    pub fn new(split: &str, stats: ClassStats, skipped: Option<SkipReport>) -> Self {
        let absent_classes = stats
            .classes
            .iter()
            .filter(|c| c.count == 0)
            .map(|c| c.name.clone())
            .collect();
        Self {
            format_version: STATS_FILE_VERSION,
            split: split.to_string(),
            stats,
            absent_classes,
            skipped,
            metadata: None,
        }
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version != STATS_FILE_VERSION {
            return Err(Error::FormatVersion {
                what: "stats file",
                found: self.format_version,
                expected: STATS_FILE_VERSION,
            });
        }
        Ok(())
    }
}

/// Seeded uniform split into `(kept, held_out)`, each in original order.
pub fn seeded_split(scenes: &[Scene], held_out: usize, seed: u64) -> Result<(Vec<Scene>, Vec<Scene>)> {
    use rand::seq::index::sample;
    use rand::SeedableRng;
    if held_out > scenes.len() {
        return Err(invalid_input(format!(
            "cannot hold out {held_out} of {} scenes",
            scenes.len()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pick = vec![false; scenes.len()];
    for i in sample(&mut rng, scenes.len(), held_out) {
        pick[i] = true;
    }
    let (mut kept, mut out) = (Vec::new(), Vec::new());
    for (s, p) in scenes.iter().zip(pick) {
        if p {
            out.push(s.clone());
        } else {
            kept.push(s.clone());
        }
    }
    Ok((kept, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(id: &str, classes: &[usize]) -> Scene {
        Scene {
            image_id: id.into(),
            image_width: 100.0,
            image_height: 100.0,
            objects: classes
                .iter()
                .map(|&c| GroundTruthObject {
                    bbox: BoundingBox::new(1.0, 1.0, 10.0, 10.0).unwrap(),
                    class_index: c,
                })
                .collect(),
        }
    }

    #[test]
    fn stats_definition() {
        let classes = ClassTable::from_foreground(["car", "bus"]).unwrap();
        let mut scenes: Vec<Scene> = (0..10).map(|i| scene(&i.to_string(), &[])).collect();
        for s in scenes.iter_mut().take(5) {
            *s = scene(&s.image_id, &[2]);
        }
        let stats = compute_stats(&scenes, &classes).unwrap();
        assert_eq!(stats.image_count, 10);
        assert_eq!(stats.get("bus").unwrap().count, 5);
        assert_eq!(stats.get("bus").unwrap().frequency, 0.5);
        assert_eq!(stats.get("car").unwrap().count, 0);
        assert_eq!(stats.get("car").unwrap().frequency, 0.0);
        let file = StatsFile::new("train", stats, None);
        assert_eq!(file.absent_classes, vec!["car".to_string()]);
        assert!(compute_stats(&[], &classes).is_err());
    }

    #[test]
    fn stats_are_additive_over_splits() {
        let classes = ClassTable::from_foreground(["a", "b"]).unwrap();
        let s1: Vec<Scene> = vec![scene("1", &[1, 1, 2]), scene("2", &[])];
        let s2: Vec<Scene> = vec![scene("3", &[2]), scene("4", &[1]), scene("5", &[2, 2])];
        let a = compute_stats(&s1, &classes).unwrap();
        let b = compute_stats(&s2, &classes).unwrap();
        let all: Vec<Scene> = s1.iter().chain(&s2).cloned().collect();
        let c = compute_stats(&all, &classes).unwrap();
        for ((x, y), z) in a.classes.iter().zip(&b.classes).zip(&c.classes) {
            assert_eq!(x.count + y.count, z.count);
            let weighted = (x.frequency * 2.0 + y.frequency * 3.0) / 5.0;
            assert!((weighted - z.frequency).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_split_is_deterministic_partition() {
        let scenes: Vec<Scene> = (0..50).map(|i| scene(&i.to_string(), &[])).collect();
        let (a, b) = seeded_split(&scenes, 10, 7).unwrap();
        let (a2, b2) = seeded_split(&scenes, 10, 7).unwrap();
        assert_eq!((a.len(), b.len()), (40, 10));
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        assert!(seeded_split(&scenes, 51, 7).is_err());
    }
}
