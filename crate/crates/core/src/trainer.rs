//! Momentum-SGD training of a small softmax proposal classifier.
//!
//! The classifier is either linear (`logits = W x + b`) or has one tanh
//! hidden layer. Everything is double precision and single threaded, so a
//! run is bit-reproducible for a given config and data.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::dataset::ProposalBatch;
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::loss::{loss_grad_from_probs, softmax_into, LossConfig};
use crate::provenance::Metadata;
use crate::sampler::{mine_batch, MiningConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    Mlp { hidden_dim: usize },
}

/// Dense layer, `weights` is `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub architecture: Architecture,
    pub feature_dim: usize,
    pub classes: ClassTable,
    pub layers: Vec<Layer>,
}

/// Scaled-uniform initialisation with zero biases.
pub fn init_model(arch: Architecture, feature_dim: usize, classes: &ClassTable, seed: u64) -> Result<ClassifierModel> {
    if feature_dim == 0 {
        return Err(invalid_config("feature_dim must be positive"));
    }
    let dims = match arch {
        Architecture::Linear => vec![(feature_dim, classes.len())],
        Architecture::Mlp { hidden_dim } => {
            if hidden_dim == 0 {
                return Err(invalid_config("hidden_dim must be positive"));
            }
            vec![(feature_dim, hidden_dim), (hidden_dim, classes.len())]
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut layer = Layer::zeros(fan_in, fan_out);
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..=bound);
            }
            layer
        })
        .collect();
    Ok(ClassifierModel {
        architecture: arch,
        feature_dim,
        classes: classes.clone(),
        layers,
    })
}

/// Intermediate activations of one forward pass.
struct Trace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`
    /// (after tanh for hidden layers, raw logits for the last).
    acts: Vec<Vec<f64>>,
}

impl ClassifierModel {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(invalid_input(format!(
                "feature vector has {} entries, model expects {}",
                features.len(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.forward(&acts[i], &mut out);
            if i != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        Trace { acts }
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(features)?;
        let logits = self.forward_trace(features).acts.pop().unwrap();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(invalid_input("model produced non-finite logits"));
        }
        Ok(logits)
    }

    /// Accumulates the gradient of `dlogits · logits(x)` into `grads`.
    fn backward(&self, trace: &Trace, dlogits: &[f64], grads: &mut [Layer]) {
        let mut delta = dlogits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.acts[i];
            let g = &mut grads[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // tanh' = 1 - tanh^2
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }

    fn zero_like(&self) -> Vec<Layer> {
        self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect()
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Class probabilities for each feature vector.
pub fn predict<'a, I>(model: &ClassifierModel, features: I) -> Result<Vec<Vec<f64>>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    features
        .into_iter()
        .map(|x| {
            let logits = model.logits(x)?;
            let mut p = vec![0.0; logits.len()];
            softmax_into(&logits, &mut p);
            Ok(p)
        })
        .collect()
}

pub fn predict_batch(model: &ClassifierModel, batch: &ProposalBatch) -> Result<Vec<Vec<f64>>> {
    predict(model, batch.proposals.iter().map(|p| p.features.as_slice()))
}

/// Heavy-ball momentum: `v <- mu v - lr g`, `theta <- theta + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl MomentumSgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn step<'a, P, G>(&mut self, params: P, grads: G)
    where
        P: IntoIterator<Item = &'a mut Vec<f64>>,
        G: IntoIterator<Item = &'a [f64]>,
    {
        for (i, (theta, g)) in params.into_iter().zip(grads).enumerate() {
            if self.velocity.len() <= i {
                self.velocity.push(vec![0.0; theta.len()]);
            }
            for ((t, v), gi) in theta.iter_mut().zip(&mut self.velocity[i]).zip(g) {
                *v = self.momentum * *v - self.learning_rate * gi;
                *t += *v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Proposals per mini-batch before mining.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub mining: MiningConfig,
}

impl TrainConfig {
    pub fn new(loss: LossConfig) -> Self {
        Self {
            learning_rate: 0.03,
            momentum: 0.9,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            loss,
            mining: MiningConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid_config(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid_config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(invalid_config("batch_size and epochs must be at least 1"));
        }
        self.loss.validate()?;
        self.mining.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over trained batches of the mined-batch loss.
    pub mean_loss: f64,
    pub batches: usize,
    /// Batches without foreground proposals.
    pub skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

/// Mined-batch loss and its gradient with respect to every parameter.
///
/// Returns `None` when the batch has no foreground proposals.
pub fn batch_gradient(
    model: &ClassifierModel,
    batch: &ProposalBatch,
    loss: &LossConfig,
    mining: &MiningConfig,
    mining_seed: u64,
) -> Result<Option<(f64, Vec<Layer>)>> {
    let c = model.num_classes();
    let traces: Vec<Trace> = batch
        .proposals
        .iter()
        .map(|p| {
            model.check_dim(&p.features)?;
            Ok(model.forward_trace(&p.features))
        })
        .collect::<Result<_>>()?;
    let mut probs = vec![vec![0.0; c]; traces.len()];
    let mut losses = Vec::with_capacity(traces.len());
    let mut scratch = vec![0.0; c];
    for ((t, p), prop) in traces.iter().zip(&mut probs).zip(&batch.proposals) {
        softmax_into(t.acts.last().unwrap(), p);
        if prop.label >= c {
            return Err(invalid_input(format!("label {} out of range", prop.label)));
        }
        losses.push(loss_grad_from_probs(p, prop.label, loss, 0.0, &mut scratch));
    }
    let labels = batch.labels();
    let selected = match mine_batch(&labels, &losses, mining, mining_seed) {
        Ok(s) => s,
        Err(Error::EmptyForeground) => return Ok(None),
        Err(e) => return Err(e),
    };
    let scale = 1.0 / selected.len() as f64;
    let mut grads = model.zero_like();
    let mut sum = 0.0;
    let mut dlogits = vec![0.0; c];
    for &i in &selected {
        sum += loss_grad_from_probs(&probs[i], labels[i], loss, scale, &mut dlogits);
        model.backward(&traces[i], &dlogits, &mut grads);
    }
    Ok(Some((sum / selected.len() as f64, grads)))
}

/// Trains `model` in place over `batches` and returns the per-epoch log.
pub fn train(model: &mut ClassifierModel, batches: &[ProposalBatch], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if batches.is_empty() {
        return Err(invalid_input("no training batches"));
    }
    if cfg.loss.static_weights.len() != model.num_classes() {
        return Err(invalid_input("loss weights do not match the model's class count"));
    }
    for b in batches {
        if b.feature_dim != model.feature_dim {
            return Err(invalid_input(format!(
                "batch feature_dim {} does not match model {}",
                b.feature_dim, model.feature_dim
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = MomentumSgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..batches.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut trained, mut skipped) = (0.0, 0usize, 0usize);
        for (step, &bi) in order.iter().enumerate() {
            let mining_seed = rng.next_u64();
            let Some((value, grads)) = batch_gradient(model, &batches[bi], &cfg.loss, &cfg.mining, mining_seed)?
            else {
                skipped += 1;
                continue;
            };
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: step,
                    loss: value,
                });
            }
            let flat: Vec<&[f64]> = grads.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]).collect();
            opt.step(model.tensors_mut(), flat);
            if !model.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: step,
                    loss: f64::NAN,
                });
            }
            total += value;
            trained += 1;
        }
        log.epochs.push(EpochLog {
            epoch,
            mean_loss: if trained > 0 { total / trained as f64 } else { 0.0 },
            batches: trained,
            skipped,
        });
    }
    Ok(log)
}

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: ClassifierModel,
    pub train_config: TrainConfig,
    pub log: TrainLog,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

impl ModelFile {
    pub fn check_version(&self) -> Result<()> {
        if self.format_version != MODEL_FILE_VERSION {
            return Err(Error::FormatVersion {
                what: "model file",
                found: self.format_version,
                expected: MODEL_FILE_VERSION,
            });
        }
        Ok(())
    }
}
