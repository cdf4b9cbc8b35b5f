//! Every weighting scheme over the same class statistics.

use std::collections::BTreeMap;

use rebalance::weights::{scheme_dispatch, Clamp, ClassStats, CountMode, EffectiveForm, SchemeConfig};

fn main() -> rebalance::Result<()> {
    // mean objects per image over 10k images
    let stats = ClassStats::from_frequencies(
        10_000,
        [("car", 5.0), ("truck", 0.171), ("bus", 0.0655), ("person", 0.365), ("motor", 0.0154), ("bike", 0.0389)],
    )?;
    let classes = stats.class_table()?;
    let manual: BTreeMap<String, f64> = ["bus", "motor", "bike"].iter().map(|c| (c.to_string(), 5.0)).collect();

    let schemes = [
        SchemeConfig::Uniform,
        SchemeConfig::Balanced { manual_weights: manual },
        SchemeConfig::InverseLinear {
            k: 0.5,
            clamp: Clamp::floor(["car"]),
        },
        SchemeConfig::InverseLog {
            q: 20.0,
            log_base: std::f64::consts::E,
            clamp: Clamp::floor(["car"]),
        },
        SchemeConfig::effective_number(0.9),
        SchemeConfig::EffectiveNumber {
            beta: 0.9,
            normalize_reference: None,
            count_mode: CountMode::PerImage,
            form: EffectiveForm::InverseNormalized,
        },
    ];

    print!("{:<28}", "scheme");
    for name in classes.names() {
        print!("{name:>11}");
    }
    println!();
    for scheme in &schemes {
        let file = scheme_dispatch(scheme, Some(&stats), &classes)?;
        let label = match scheme {
            SchemeConfig::EffectiveNumber { count_mode, .. } => format!("effective_number ({count_mode:?})"),
            other => other.name().to_string(),
        };
        print!("{label:<28}");
        for c in &file.classes {
            print!("{:>11.3}", c.weight);
        }
        println!();
    }
    Ok(())
}
