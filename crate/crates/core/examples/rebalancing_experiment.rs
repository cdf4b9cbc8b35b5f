//! Cross entropy against rebalanced losses on a long-tail synthetic dataset.
//!
//! Trains one model per loss on the same data and prints the recall table.

use std::collections::BTreeMap;

use rebalance::dataset::{compute_stats, generate_splits, SynthConfig};
use rebalance::eval::EvalConfig;
use rebalance::pipeline::{evaluate_model, train_on_split, TrainSettings};
use rebalance::report::{render, TableFormat};
use rebalance::weights::{scheme_dispatch, Clamp, CountMode, EffectiveForm, SchemeConfig};

fn main() -> rebalance::Result<()> {
    let cfg = SynthConfig::geometric(7, 3.0, 1.0 / 3.0, 42);
    let classes = cfg.class_table()?;
    let splits = generate_splits(&cfg, &[("train", 5000), ("eval", 1000)])?;
    let (train, eval) = (&splits[0].1, &splits[1].1);
    let stats = compute_stats(&train.scenes, &classes)?;

    let manual: BTreeMap<String, f64> = (2..=7).map(|j| (format!("class{j}"), 5.0)).collect();
    let runs: Vec<(&str, SchemeConfig, f64)> = vec![
        ("CE", SchemeConfig::Uniform, 0.0),
        ("Balanced", SchemeConfig::Balanced { manual_weights: manual }, 0.0),
        (
            "Inv. linear",
            SchemeConfig::InverseLinear {
                k: 1.0,
                clamp: Clamp::floor(["class1"]),
            },
            0.0,
        ),
        ("Focal", SchemeConfig::Uniform, 2.0),
        (
            "Eff. number",
            SchemeConfig::EffectiveNumber {
                beta: 0.9,
                normalize_reference: None,
                count_mode: CountMode::PerImage,
                form: EffectiveForm::InverseNormalized,
            },
            0.0,
        ),
    ];

    let mut reports = Vec::new();
    for (label, scheme, focal_alpha) in runs {
        let weights = scheme_dispatch(&scheme, Some(&stats), &classes)?.weight_vector()?;
        let settings = TrainSettings {
            focal_alpha,
            ..Default::default()
        };
        let (model, _, _) = train_on_split(train, &classes, weights, &settings)?;
        reports.push((label.to_string(), evaluate_model(&model, eval, &EvalConfig::default())?));
    }
    print!("{}", render(&reports, TableFormat::Text));
    Ok(())
}
