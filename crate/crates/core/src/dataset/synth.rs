//! Seeded synthetic long-tail proposal data.
//!
//! Each image draws a Poisson number of objects per class. Every object gets
//! a box, a feature vector from its class Gaussian, and exactly one positive
//! proposal whose box overlaps the object with an IoU drawn uniformly from
//! `positive_iou_range`. Background proposals (features from the background
//! Gaussian, boxes with IoU < 0.3 against every object) are scattered
//! uniformly over the images, `bg_per_fg` per foreground proposal.
//!
//! Class means sit on the vertices of a regular simplex so every pair of
//! classes, background included, is exactly `class_separation` apart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{GroundTruthObject, Proposal, ProposalBatch, Scene, DEFAULT_IMAGE_HEIGHT, DEFAULT_IMAGE_WIDTH};
use crate::boxes::{iou, BoundingBox};
use crate::classes::ClassTable;
use crate::error::{invalid_config, Error, Result};

/// Background proposals must overlap every object by less than this.
pub const BACKGROUND_MAX_IOU: f64 = 0.3;
const PLACEMENT_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    /// Mean objects per image for each foreground class.
    pub class_rates: Vec<f64>,
    pub feature_dim: usize,
    /// Distance between any two class means.
    pub class_separation: f64,
    /// Per-coordinate standard deviation around each class mean.
    pub feature_noise: f64,
    /// Background proposals per foreground proposal.
    pub bg_per_fg: f64,
    pub positive_iou_range: [f64; 2],
    /// Side lengths of object and background boxes are drawn from this range.
    pub box_size_range: [f64; 2],
    pub image_width: f64,
    pub image_height: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Defaults for everything except the class rates.
    ///
    /// Separation 4.5 with noise 1.0 was calibrated for seven foreground
    /// classes at equal rates: a linear classifier trained with the default
    /// settings reaches 91.0% balanced accuracy over all eight classes
    /// (89.9% over the foreground ones). Separation 4.0 gives 85.5% and 5.0
    /// gives 95.4%.
    pub fn with_rates(class_rates: Vec<f64>, seed: u64) -> Self {
        let num_classes = class_rates.len();
        Self {
            num_classes,
            class_rates,
            feature_dim: num_classes + 1,
            class_separation: 4.5,
            feature_noise: 1.0,
            bg_per_fg: 3.0,
            positive_iou_range: [0.55, 0.95],
            box_size_range: [20.0, 200.0],
            image_width: DEFAULT_IMAGE_WIDTH,
            image_height: DEFAULT_IMAGE_HEIGHT,
            seed,
        }
    }

    /// `num_classes` classes with rates `first * ratio^j`.
    pub fn geometric(num_classes: usize, first: f64, ratio: f64, seed: u64) -> Self {
        // repeated multiplication: powi may be folded differently at compile time
        let rates = std::iter::successors(Some(first), |r| Some(r * ratio)).take(num_classes).collect();
        Self::with_rates(rates, seed)
    }

    pub fn class_table(&self) -> Result<ClassTable> {
        ClassTable::from_foreground((1..=self.num_classes).map(|j| format!("class{j}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(invalid_config("num_classes must be at least 2"));
        }
        if self.class_rates.len() != self.num_classes {
            return Err(invalid_config(format!(
                "{} class rates for {} classes",
                self.class_rates.len(),
                self.num_classes
            )));
        }
        if let Some(r) = self.class_rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(invalid_config(format!("class rates must be > 0, got {r}")));
        }
        if self.feature_dim < self.num_classes + 1 {
            return Err(invalid_config(format!(
                "feature_dim must be at least num_classes + 1 = {}",
                self.num_classes + 1
            )));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(invalid_config("class_separation must be finite and >= 0"));
        }
        if !(self.feature_noise.is_finite() && self.feature_noise >= 0.0) {
            return Err(invalid_config("feature_noise must be finite and >= 0"));
        }
        if !(self.bg_per_fg.is_finite() && self.bg_per_fg >= 0.0) {
            return Err(invalid_config("bg_per_fg must be finite and >= 0"));
        }
        let [lo, hi] = self.positive_iou_range;
        if !(lo > 0.5 && lo <= hi && hi <= 1.0) {
            return Err(invalid_config(format!(
                "positive_iou_range must satisfy 0.5 < lo <= hi <= 1, got [{lo}, {hi}]"
            )));
        }
        let [smin, smax] = self.box_size_range;
        if !(smin > 0.0 && smin <= smax) {
            return Err(invalid_config("box_size_range must satisfy 0 < min <= max"));
        }
        // A positive box is shifted by at most a third of its side.
        if smax * 4.0 / 3.0 > self.image_width.min(self.image_height) {
            return Err(invalid_config("boxes do not fit in the virtual image"));
        }
        Ok(())
    }

    fn class_mean(&self, class: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.feature_dim];
        m[class] = self.class_separation / std::f64::consts::SQRT_2;
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSplit {
    pub scenes: Vec<Scene>,
    pub proposals: ProposalBatch,
}

/// Seed for the `index`-th split of a dataset.
pub fn split_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Generates several independently seeded splits, e.g. train and eval.
pub fn generate_splits(cfg: &SynthConfig, splits: &[(&str, usize)]) -> Result<Vec<(String, SyntheticSplit)>> {
    splits
        .iter()
        .enumerate()
        .map(|(i, (name, n))| {
            let sub = SynthConfig {
                seed: split_seed(cfg.seed, i),
                ..cfg.clone()
            };
            Ok((name.to_string(), generate_synthetic(&sub, *n)?))
        })
        .collect()
}

/// Generates `num_images` scenes and their proposals. Pure in `(cfg, num_images)`.
pub fn generate_synthetic(cfg: &SynthConfig, num_images: usize) -> Result<SyntheticSplit> {
    cfg.validate()?;
    if num_images == 0 {
        return Err(invalid_config("num_images must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.feature_noise).map_err(|e| invalid_config(e.to_string()))?;
    let poisson: Vec<Poisson<f64>> = cfg
        .class_rates
        .iter()
        .map(|&r| Poisson::new(r).map_err(|e| invalid_config(e.to_string())))
        .collect::<Result<_>>()?;
    let means: Vec<Vec<f64>> = (0..=cfg.num_classes).map(|c| cfg.class_mean(c)).collect();
    let sample_feature = |rng: &mut ChaCha8Rng, class: usize| -> Vec<f64> {
        means[class].iter().map(|m| m + noise.sample(rng)).collect()
    };

    let mut scenes = Vec::with_capacity(num_images);
    let mut positives: Vec<Vec<Proposal>> = Vec::with_capacity(num_images);
    for i in 0..num_images {
        let image_id = format!("img{i:06}");
        let mut objects = Vec::new();
        let mut props = Vec::new();
        for (j, dist) in poisson.iter().enumerate() {
            let class = j + 1;
            let count = dist.sample(&mut rng) as usize;
            for _ in 0..count {
                let bbox = random_box(cfg, &mut rng);
                let features = sample_feature(&mut rng, class);
                let target = rng.random_range(cfg.positive_iou_range[0]..=cfg.positive_iou_range[1]);
                let jittered = jitter_to_iou(cfg, &bbox, target, &mut rng)?;
                objects.push(GroundTruthObject {
                    bbox,
                    class_index: class,
                });
                props.push(Proposal {
                    image_id: image_id.clone(),
                    label: class,
                    bbox: jittered,
                    features,
                });
            }
        }
        scenes.push(Scene {
            image_id,
            image_width: cfg.image_width,
            image_height: cfg.image_height,
            objects,
        });
        positives.push(props);
    }

    let total_fg: usize = positives.iter().map(Vec::len).sum();
    let total_bg = (cfg.bg_per_fg * total_fg as f64).floor() as usize;
    let mut bg_per_image = vec![0usize; num_images];
    for _ in 0..total_bg {
        bg_per_image[rng.random_range(0..num_images)] += 1;
    }

    let mut proposals = Vec::with_capacity(total_fg + total_bg);
    for ((scene, props), n_bg) in scenes.iter().zip(positives).zip(bg_per_image) {
        proposals.extend(props);
        for _ in 0..n_bg {
            let bbox = background_box(cfg, scene, &mut rng)?;
            let features = sample_feature(&mut rng, 0);
            proposals.push(Proposal {
                image_id: scene.image_id.clone(),
                label: 0,
                bbox,
                features,
            });
        }
    }

    Ok(SyntheticSplit {
        scenes,
        proposals: ProposalBatch {
            feature_dim: cfg.feature_dim,
            proposals,
        },
    })
}

fn random_box(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> BoundingBox {
    let [smin, smax] = cfg.box_size_range;
    let w = rng.random_range(smin..=smax);
    let h = rng.random_range(smin..=smax);
    let x = rng.random_range(0.0..=cfg.image_width - w);
    let y = rng.random_range(0.0..=cfg.image_height - h);
    BoundingBox {
        x1: x,
        y1: y,
        x2: x + w,
        y2: y + h,
    }
}

/// Shifts `bbox` along one axis so its IoU with the original equals `target`.
///
/// For a same-size box shifted by `d` along a side of length `s`,
/// IoU = (s - d) / (s + d), hence d = s (1 - t) / (1 + t).
fn jitter_to_iou(cfg: &SynthConfig, bbox: &BoundingBox, target: f64, rng: &mut ChaCha8Rng) -> Result<BoundingBox> {
    let horizontal = rng.random_bool(0.5);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let side = if horizontal { bbox.width() } else { bbox.height() };
    let d = side * (1.0 - target) / (1.0 + target);
    for s in [sign, -sign] {
        let moved = if horizontal {
            bbox.translate(s * d, 0.0)
        } else {
            bbox.translate(0.0, s * d)
        };
        if moved.within(cfg.image_width, cfg.image_height) {
            return Ok(moved);
        }
    }
    Err(Error::Generation(format!("cannot place a positive proposal for {bbox:?}")))
}

fn background_box(cfg: &SynthConfig, scene: &Scene, rng: &mut ChaCha8Rng) -> Result<BoundingBox> {
    for _ in 0..PLACEMENT_RETRIES {
        let b = random_box(cfg, rng);
        if scene.objects.iter().all(|o| iou(&b, &o.bbox) < BACKGROUND_MAX_IOU) {
            return Ok(b);
        }
    }
    Err(Error::Generation(format!(
        "no background box with IoU < {BACKGROUND_MAX_IOU} after {PLACEMENT_RETRIES} tries in `{}`",
        scene.image_id
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_stats;

    #[test]
    fn determinism() {
        let cfg = SynthConfig::geometric(3, 1.0, 0.5, 11);
        let a = generate_synthetic(&cfg, 50).unwrap();
        let b = generate_synthetic(&cfg, 50).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = generate_synthetic(&SynthConfig { seed: 12, ..cfg }, 50).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn proposal_geometry() {
        let cfg = SynthConfig::geometric(4, 2.0, 0.5, 3);
        let split = generate_synthetic(&cfg, 200).unwrap();
        let mut next_obj = std::collections::HashMap::<&str, usize>::new();
        let by_id: std::collections::HashMap<&str, &Scene> =
            split.scenes.iter().map(|s| (s.image_id.as_str(), s)).collect();
        let (mut n_fg, mut n_bg) = (0, 0);
        for p in &split.proposals.proposals {
            let scene = by_id[p.image_id.as_str()];
            if p.label == 0 {
                n_bg += 1;
                for o in &scene.objects {
                    assert!(iou(&p.bbox, &o.bbox) < BACKGROUND_MAX_IOU);
                }
            } else {
                n_fg += 1;
                // positives are emitted in object order
                let k = next_obj.entry(scene.image_id.as_str()).or_default();
                let obj = &scene.objects[*k];
                *k += 1;
                assert_eq!(obj.class_index, p.label);
                let v = iou(&p.bbox, &obj.bbox);
                assert!(v > 0.5 && v >= 0.55 - 1e-9 && v <= 0.95 + 1e-9, "iou {v}");
            }
            assert!(p.bbox.within(cfg.image_width, cfg.image_height));
        }
        assert_eq!(n_bg, 3 * n_fg);
    }

    #[test]
    fn tiny_rates_give_background_only_scenes() {
        let cfg = SynthConfig::with_rates(vec![1e-3, 1e-3], 5);
        let split = generate_synthetic(&cfg, 2000).unwrap();
        let empty = split.scenes.iter().filter(|s| s.objects.is_empty()).count();
        assert!(empty > 1900);
        let fg = split.proposals.num_foreground();
        assert!(fg > 0);
        assert_eq!(split.proposals.len() - fg, 3 * fg);
    }

    #[test]
    fn rejects_invalid_configs() {
        let ok = SynthConfig::geometric(3, 1.0, 0.5, 1);
        assert!(generate_synthetic(&ok, 0).is_err());
        let mut c = ok.clone();
        c.class_rates[1] = 0.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.positive_iou_range = [0.5, 0.9];
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.feature_dim = 3;
        assert!(c.validate().is_err());
        let mut c = ok;
        c.num_classes = 1;
        c.class_rates = vec![1.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn empirical_rates_converge() {
        let cfg = SynthConfig::geometric(7, 3.0, 1.0 / 3.0, 2024);
        let n = 5000;
        let split = generate_synthetic(&cfg, n).unwrap();
        let stats = compute_stats(&split.scenes, &cfg.class_table().unwrap()).unwrap();
        for (c, &rate) in stats.classes.iter().zip(&cfg.class_rates) {
            let se = (rate / n as f64).sqrt();
            assert!(
                (c.frequency - rate).abs() <= 3.0 * se,
                "{}: {} vs {rate}",
                c.name,
                c.frequency
            );
        }
        // first classes are also within 5% relative
        for (c, &rate) in stats.classes.iter().zip(&cfg.class_rates).take(3) {
            assert!((c.frequency - rate).abs() <= 0.05 * rate);
        }
    }

    #[test]
    fn class_means_are_equidistant() {
        let cfg = SynthConfig::geometric(4, 1.0, 0.5, 1);
        for a in 0..=4 {
            for b in 0..a {
                let (ma, mb) = (cfg.class_mean(a), cfg.class_mean(b));
                let d: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!((d - cfg.class_separation).abs() < 1e-12);
            }
        }
    }
}
