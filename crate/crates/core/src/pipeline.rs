//! In-process composition of the stages: stats -> weights -> train -> eval.
//!
//! The CLI runs the same functions with files in between; both routes give
//! the same documents.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::dataset::{compute_stats, generate_splits, LabelFormat, ProposalBatch, StatsFile, SynthConfig, SyntheticSplit};
use crate::error::{invalid_input, Result};
use crate::eval::{evaluate, Detection, EvalConfig, EvalReport};
use crate::loss::{LossConfig, DEFAULT_PROB_FLOOR};
use crate::sampler::MiningConfig;
use crate::trainer::{init_model, predict_batch, train, Architecture, ClassifierModel, ModelFile, TrainConfig, TrainLog, MODEL_FILE_VERSION};
use crate::weights::{scheme_dispatch, SchemeConfig, WeightFile, WeightVector};

/// Everything in a [`TrainConfig`] except the class weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub focal_alpha: f64,
    pub prob_floor: f64,
    pub mining: MiningConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            architecture: Architecture::Linear,
            learning_rate: 0.03,
            momentum: 0.9,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            focal_alpha: 0.0,
            prob_floor: DEFAULT_PROB_FLOOR,
            mining: MiningConfig::default(),
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self, weights: WeightVector) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            loss: LossConfig {
                static_weights: weights,
                focal_alpha: self.focal_alpha,
                prob_floor: self.prob_floor,
            },
            mining: self.mining,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Labels {
        path: PathBuf,
        format: LabelFormat,
    },
    Synthetic {
        config: SynthConfig,
        train_images: usize,
        eval_images: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub scheme: SchemeConfig,
    pub train: TrainSettings,
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Turns classified proposals into detections: each proposal yields one
/// detection for its most probable foreground class, scored by that
/// probability.
pub fn detections_from_proposals(batch: &ProposalBatch, probs: &[Vec<f64>]) -> Result<Vec<Detection>> {
    if probs.len() != batch.len() {
        return Err(invalid_input("one probability vector per proposal is required"));
    }
    batch
        .proposals
        .iter()
        .zip(probs)
        .map(|(p, pr)| {
            let (class_index, &score) = pr
                .iter()
                .enumerate()
                .skip(1)
                .fold(None, |best: Option<(usize, &f64)>, (i, s)| match best {
                    Some((_, b)) if b >= s => best,
                    _ => Some((i, s)),
                })
                .ok_or_else(|| invalid_input("probability vectors need a foreground class"))?;
            Ok(Detection {
                image_id: p.image_id.clone(),
                bbox: p.bbox,
                class_index,
                score: score.clamp(0.0, 1.0),
            })
        })
        .collect()
}

/// Trains a fresh model on one split's proposals.
pub fn train_on_split(
    split: &SyntheticSplit,
    classes: &ClassTable,
    weights: WeightVector,
    settings: &TrainSettings,
) -> Result<(ClassifierModel, TrainConfig, TrainLog)> {
    let cfg = settings.train_config(weights);
    let mut model = init_model(settings.architecture, split.proposals.feature_dim, classes, settings.seed)?;
    let batches = split.proposals.chunks(settings.batch_size);
    let log = train(&mut model, &batches, &cfg)?;
    Ok((model, cfg, log))
}

/// Classifies a split's proposals and evaluates the resulting detections.
pub fn evaluate_model(model: &ClassifierModel, split: &SyntheticSplit, cfg: &EvalConfig) -> Result<EvalReport> {
    let probs = predict_batch(model, &split.proposals)?;
    let detections = detections_from_proposals(&split.proposals, &probs)?;
    evaluate(&detections, &split.scenes, &model.classes, cfg)
}

/// Documents produced by one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub stats: StatsFile,
    pub weights: WeightFile,
    /// Present for synthetic datasets, which carry proposal features.
    pub model: Option<ModelFile>,
    pub report: Option<EvalReport>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    match &cfg.dataset {
        DatasetSource::Labels { path, format } => {
            let parsed = crate::dataset::parse_labels(path, *format)?;
            let stats = compute_stats(&parsed.scenes, &parsed.classes)?;
            let weights = scheme_dispatch(&cfg.scheme, Some(&stats), &parsed.classes)?;
            Ok(ExperimentOutcome {
                stats: StatsFile::new("all", stats, Some(parsed.skipped)),
                weights,
                model: None,
                report: None,
            })
        }
        DatasetSource::Synthetic {
            config,
            train_images,
            eval_images,
        } => {
            let classes = config.class_table()?;
            let splits = generate_splits(config, &[("train", *train_images), ("eval", *eval_images)])?;
            let (train_split, eval_split) = (&splits[0].1, &splits[1].1);
            let stats = compute_stats(&train_split.scenes, &classes)?;
            let weights = scheme_dispatch(&cfg.scheme, Some(&stats), &classes)?;
            let (model, train_config, log) = train_on_split(train_split, &classes, weights.weight_vector()?, &cfg.train)?;
            let report = evaluate_model(&model, eval_split, &cfg.eval)?;
            Ok(ExperimentOutcome {
                stats: StatsFile::new("train", stats, None),
                weights,
                model: Some(ModelFile {
                    format_version: MODEL_FILE_VERSION,
                    model,
                    train_config,
                    log,
                    metadata: None,
                }),
                report: Some(report),
            })
        }
    }
}
