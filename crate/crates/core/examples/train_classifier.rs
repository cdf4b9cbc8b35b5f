//! Training the proposal classifier with momentum SGD.

use rebalance::dataset::{generate_splits, SynthConfig};
use rebalance::pipeline::{train_on_split, TrainSettings};
use rebalance::trainer::{predict_batch, Architecture};
use rebalance::weights::WeightVector;

fn main() -> rebalance::Result<()> {
    let cfg = SynthConfig::geometric(4, 2.0, 0.5, 1);
    let classes = cfg.class_table()?;
    let splits = generate_splits(&cfg, &[("train", 1000), ("eval", 300)])?;

    for arch in [Architecture::Linear, Architecture::Mlp { hidden_dim: 32 }] {
        let settings = TrainSettings {
            architecture: arch,
            epochs: 5,
            ..Default::default()
        };
        let (model, _, log) = train_on_split(&splits[0].1, &classes, WeightVector::ones(classes.clone()), &settings)?;
        let losses: Vec<String> = log.epochs.iter().map(|e| format!("{:.4}", e.mean_loss)).collect();

        let eval = &splits[1].1.proposals;
        let probs = predict_batch(&model, eval)?;
        let correct = probs
            .iter()
            .zip(&eval.proposals)
            .filter(|(p, prop)| {
                let best = p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b });
                best == prop.label
            })
            .count();
        println!(
            "{arch:?}: epoch losses [{}], eval accuracy {:.1}%",
            losses.join(", "),
            100.0 * correct as f64 / eval.len() as f64
        );
    }
    Ok(())
}
