//! Softmax and the weighted / focal cross-entropy family.
//!
//! Every loss here is an instance of one per-proposal form
//!
//! ```text
//! loss = w[y] * (1 - p[y])^alpha * -ln(max(p[y], prob_floor))
//! ```
//!
//! where `y` is the target class. With `w ≡ 1` and `alpha = 0` this is plain
//! cross entropy, with `alpha = 0` it is weighted cross entropy, and with
//! `w ≡ 1` it is the focal loss. The static weight is multiplied in last so
//! that scaling a class weight scales its loss exactly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};
use crate::weights::WeightVector;

pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

/// Static class weights, focal exponent and the probability clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub static_weights: WeightVector,
    pub focal_alpha: f64,
    pub prob_floor: f64,
}

impl LossConfig {
    /// Plain cross entropy over `num_classes` classes (background included).
    pub fn cross_entropy(static_weights: WeightVector) -> Self {
        Self {
            static_weights,
            focal_alpha: 0.0,
            prob_floor: DEFAULT_PROB_FLOOR,
        }
    }

    pub fn with_focal_alpha(mut self, alpha: f64) -> Self {
        self.focal_alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.focal_alpha.is_finite() || self.focal_alpha < 0.0 {
            return Err(invalid_config(format!(
                "focal alpha must be finite and >= 0, got {}",
                self.focal_alpha
            )));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor <= 1e-6) {
            return Err(invalid_config(format!(
                "prob_floor must lie in (0, 1e-6], got {}",
                self.prob_floor
            )));
        }
        self.static_weights.validate()
    }

    fn weight(&self, class: usize) -> f64 {
        self.static_weights.weights()[class]
    }
}

/// Numerically stable softmax via max subtraction.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(invalid_input("logits must not be empty"));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(invalid_input(format!("non-finite logit {bad}")));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    Ok(out)
}

/// Unchecked softmax used on hot paths; `logits` must be finite.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn check_target(len: usize, target: usize, cfg: &LossConfig) -> Result<()> {
    if target >= len {
        return Err(invalid_input(format!(
            "target class {target} out of range for {len} classes"
        )));
    }
    if cfg.static_weights.len() != len {
        return Err(invalid_input(format!(
            "weight vector has {} entries but input has {len} classes",
            cfg.static_weights.len()
        )));
    }
    Ok(())
}

/// Loss of one proposal given its class probabilities.
pub fn loss(probs: &[f64], target: usize, cfg: &LossConfig) -> Result<f64> {
    check_target(probs.len(), target, cfg)?;
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid_input("probabilities must lie in [0, 1]"));
    }
    Ok(loss_unchecked(probs[target], cfg.weight(target), cfg))
}

#[inline]
fn loss_unchecked(p: f64, weight: f64, cfg: &LossConfig) -> f64 {
    let mut value = -p.max(cfg.prob_floor).ln();
    if cfg.focal_alpha != 0.0 {
        value *= (1.0 - p).powf(cfg.focal_alpha);
    }
    weight * value
}

/// Derivative of the loss with respect to `p[y]`, multiplied by `p[y]`.
///
/// The gradient with respect to logit `k` is this factor times
/// `(onehot[k] - p[k])`.
#[inline]
fn scaled_dloss_dp(p: f64, weight: f64, cfg: &LossConfig) -> f64 {
    let alpha = cfg.focal_alpha;
    let clamped = p <= cfg.prob_floor;
    let nll = -p.max(cfg.prob_floor).ln();
    // p * d(nll)/dp
    let p_dnll = if clamped { 0.0 } else { -1.0 };
    if alpha == 0.0 {
        return weight * p_dnll;
    }
    let one_minus = 1.0 - p;
    // alpha (1-p)^(alpha-1) is singular at p = 1 for alpha < 1; taken as 0 there.
    let focal_slope = if one_minus == 0.0 {
        0.0
    } else {
        alpha * one_minus.powf(alpha - 1.0)
    };
    weight * (-focal_slope * p * nll + one_minus.powf(alpha) * p_dnll)
}

/// Loss of one proposal and its gradient with respect to the logits.
///
/// Softmax is applied internally; the returned value equals
/// `loss(softmax(logits), target, cfg)`.
pub fn loss_and_grad(logits: &[f64], target: usize, cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let probs = softmax(logits)?;
    check_target(probs.len(), target, cfg)?;
    let mut grad = vec![0.0; probs.len()];
    let value = loss_grad_from_probs(&probs, target, cfg, 1.0, &mut grad);
    Ok((value, grad))
}

/// Writes `scale * dloss/dlogits` into `grad` and returns the unscaled loss.
pub(crate) fn loss_grad_from_probs(
    probs: &[f64],
    target: usize,
    cfg: &LossConfig,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let p = probs[target];
    let weight = cfg.weight(target);
    let factor = scaled_dloss_dp(p, weight, cfg) * scale;
    for (k, (g, &pk)) in grad.iter_mut().zip(probs).enumerate() {
        let onehot = if k == target { 1.0 } else { 0.0 };
        *g = factor * (onehot - pk);
    }
    loss_unchecked(p, weight, cfg)
}

/// Mean per-proposal loss over a batch of `(logits, target)` pairs.
///
/// The divisor is the number of proposals, not the total weight mass.
pub fn batch_loss<'a, I>(batch: I, cfg: &LossConfig) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    let mut sum = 0.0;
    let mut count = 0usize;
    for (logits, target) in batch {
        let probs = softmax(logits)?;
        sum += loss(&probs, target, cfg)?;
        count += 1;
    }
    if count == 0 {
        return Err(invalid_input("batch must not be empty"));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ClassTable;
    use proptest::prelude::*;

    fn cfg(weights: Vec<f64>, alpha: f64) -> LossConfig {
        let names: Vec<String> = (1..weights.len()).map(|i| format!("c{i}")).collect();
        let table = ClassTable::from_foreground(names).unwrap();
        LossConfig::cross_entropy(WeightVector::new(table, weights).unwrap()).with_focal_alpha(alpha)
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 1000.0, 1000.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
        let p = softmax(&[1e4, -1e4, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn loss_examples() {
        let half = [0.5, 0.5];
        let l = loss(&half, 1, &cfg(vec![1.0, 1.0], 0.0)).unwrap();
        assert_eq!(l, 2f64.ln());
        let l = loss(&half, 1, &cfg(vec![1.0, 5.0], 0.0)).unwrap();
        assert!((l - 3.465_735_902_799_726_5).abs() < 1e-15);
        let l = loss(&half, 1, &cfg(vec![1.0, 1.0], 2.0)).unwrap();
        assert!((l - 0.173_286_795_139_986_33).abs() < 1e-15);
    }

    #[test]
    fn loss_rejects_mismatch() {
        assert!(loss(&[0.2, 0.3, 0.5], 0, &cfg(vec![1.0, 1.0], 0.0)).is_err());
        assert!(loss(&[0.5, 0.5], 2, &cfg(vec![1.0, 1.0], 0.0)).is_err());
    }

    #[test]
    fn floor_prevents_infinity() {
        let l = loss(&[1.0, 0.0], 1, &cfg(vec![1.0, 1.0], 0.0)).unwrap();
        assert_eq!(l, -DEFAULT_PROB_FLOOR.ln());
        let (_, g) = loss_and_grad(&[800.0, -800.0], 1, &cfg(vec![1.0, 1.0], 0.0)).unwrap();
        assert!(g.iter().all(|v| *v == 0.0 || v.is_finite()));
    }

    #[test]
    fn symmetric_gradient() {
        let (v, g) = loss_and_grad(&[0.0, 0.0], 0, &cfg(vec![1.0, 1.0], 0.0)).unwrap();
        assert_eq!(v, 2f64.ln());
        assert_eq!(g, vec![-0.5, 0.5]);
    }

    #[test]
    fn focal_gradient_matches_frozen_oracle() {
        // High-precision central differences at logits [1, -1], target 0, alpha 2.
        let (v, g) = loss_and_grad(&[1.0, -1.0], 0, &cfg(vec![1.0, 1.0], 2.0)).unwrap();
        assert!((v - 0.001_803_562_835_240_375_4).abs() < 1e-16);
        assert!((g[0] + 0.004_870_940_195_392_766_5).abs() < 1e-16);
        assert!((g[1] - 0.004_870_940_195_392_766_5).abs() < 1e-16);
    }

    #[test]
    fn focal_alpha_below_one_at_certainty() {
        // p_y == 1 exactly: the singular focal slope is taken as zero.
        let c = cfg(vec![1.0, 1.0], 0.5);
        let mut grad = vec![0.0; 2];
        let v = loss_grad_from_probs(&[1.0, 0.0], 0, &c, 1.0, &mut grad);
        assert_eq!(v, 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn batch_examples() {
        let c = cfg(vec![1.0, 1.0, 1.0], 0.0);
        let a: &[f64] = &[0.3, -1.2, 2.0];
        let single = batch_loss([(a, 2)], &c).unwrap();
        assert_eq!(single, loss(&softmax(a).unwrap(), 2, &c).unwrap());
        assert_eq!(batch_loss([(a, 2), (a, 2)], &c).unwrap(), single);

        let b: &[f64] = &[1.5, 0.1, -0.4];
        let d: &[f64] = &[-2.0, 0.5, 0.5];
        let mean = batch_loss([(a, 2), (b, 0), (d, 1)], &c).unwrap();
        assert!((mean - 0.422_923_549_889_367_1).abs() < 1e-15);
        let c2 = cfg(vec![2.0, 2.0, 2.0], 1.0);
        let mean = batch_loss([(a, 2), (b, 0), (d, 1)], &c2).unwrap();
        assert!((mean - 0.341_780_257_152_445_4).abs() < 1e-15);

        assert!(batch_loss(std::iter::empty::<(&[f64], usize)>(), &c).is_err());
    }

    #[test]
    fn validate_rejects_bad_config() {
        assert!(cfg(vec![1.0, 1.0], -1.0).validate().is_err());
        assert!(cfg(vec![1.0, 1.0], f64::NAN).validate().is_err());
        let mut c = cfg(vec![1.0, 1.0], 0.0);
        c.prob_floor = 1e-3;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn weight_is_linear(p in 1e-6f64..1.0, w in 0.0f64..50.0, alpha in 0.0f64..3.0) {
            let probs = [1.0 - p, p];
            let unit = loss(&probs, 1, &cfg(vec![1.0, 1.0], alpha)).unwrap();
            let scaled = loss(&probs, 1, &cfg(vec![1.0, w], alpha)).unwrap();
            prop_assert_eq!(scaled, w * unit);
        }

        #[test]
        fn strictly_decreasing_in_target_prob(
            p in 1e-9f64..0.999,
            dp in 1e-6f64..1e-3,
            alpha in 0.0f64..3.0,
        ) {
            let q = (p + dp).min(1.0 - 1e-12);
            let c = cfg(vec![1.0, 1.0], alpha);
            let lp = loss(&[1.0 - p, p], 1, &c).unwrap();
            let lq = loss(&[1.0 - q, q], 1, &c).unwrap();
            prop_assert!(lq < lp);
        }

        #[test]
        fn focal_damps_confident(p in 0.9f64..1.0) {
            let ce = loss(&[1.0 - p, p], 1, &cfg(vec![1.0, 1.0], 0.0)).unwrap();
            let fl = loss(&[1.0 - p, p], 1, &cfg(vec![1.0, 1.0], 2.0)).unwrap();
            prop_assert!(fl <= 0.01 * ce);
        }

        #[test]
        fn gradient_matches_central_differences(
            logits in prop::collection::vec(-4.0f64..4.0, 2..9),
            target_seed in any::<usize>(),
            w in 0.1f64..10.0,
            alpha in prop::sample::select(vec![0.0, 0.5, 1.0, 2.0]),
        ) {
            let k = logits.len();
            let target = target_seed % k;
            let c = cfg(vec![w; k], alpha);
            let (_, grad) = loss_and_grad(&logits, target, &c).unwrap();
            let h = 1e-5;
            for i in 0..k {
                let mut up = logits.clone();
                let mut down = logits.clone();
                up[i] += h;
                down[i] -= h;
                let f = |z: &[f64]| loss(&softmax(z).unwrap(), target, &c).unwrap();
                let numeric = (f(&up) - f(&down)) / (2.0 * h);
                let scale = grad[i].abs().max(numeric.abs()).max(1e-9);
                prop_assert!((grad[i] - numeric).abs() / scale < 1e-6, "{} vs {}", grad[i], numeric);
            }
        }

        #[test]
        fn softmax_is_a_distribution(logits in prop::collection::vec(-1e4f64..1e4, 1..12)) {
            let p = softmax(&logits).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }
    }
}
