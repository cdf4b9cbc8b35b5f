//! Loss values and analytic gradients of the cross-entropy family, checked
//! against central differences.

use rebalance::loss::{loss, loss_and_grad, softmax, LossConfig};
use rebalance::weights::WeightVector;
use rebalance::ClassTable;

fn main() -> rebalance::Result<()> {
    let classes = ClassTable::from_foreground(["car", "bus", "bike"])?;
    let weights = WeightVector::new(classes.clone(), vec![1.0, 1.0, 5.0, 5.0])?;
    let logits = [0.4, 1.2, -0.3, 0.1];
    let target = 2;

    let variants = [
        ("cross entropy", LossConfig::cross_entropy(WeightVector::ones(classes.clone()))),
        ("weighted", LossConfig::cross_entropy(weights.clone())),
        ("focal a=2", LossConfig::cross_entropy(WeightVector::ones(classes)).with_focal_alpha(2.0)),
        ("weighted focal a=2", LossConfig::cross_entropy(weights).with_focal_alpha(2.0)),
    ];

    let probs = softmax(&logits)?;
    println!("p(target) = {:.4}", probs[target]);
    for (name, cfg) in &variants {
        let (value, grad) = loss_and_grad(&logits, target, cfg)?;
        let h = 1e-5;
        let numeric: Vec<f64> = (0..logits.len())
            .map(|i| {
                let mut up = logits;
                let mut down = logits;
                up[i] += h;
                down[i] -= h;
                let l = |z: &[f64]| loss(&softmax(z).unwrap(), target, cfg).unwrap();
                (l(&up) - l(&down)) / (2.0 * h)
            })
            .collect();
        let err = grad.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{name:<20} loss {value:.5}  grad {grad:.4?}  max |analytic - numeric| {err:.1e}");
    }
    Ok(())
}
