//! Generating a seeded long-tail synthetic dataset.

use rebalance::dataset::{compute_stats, generate_splits, SynthConfig};

fn main() -> rebalance::Result<()> {
    let cfg = SynthConfig::geometric(7, 3.0, 1.0 / 3.0, 42);
    let classes = cfg.class_table()?;
    let splits = generate_splits(&cfg, &[("train", 2000), ("eval", 500)])?;
    for (name, split) in &splits {
        let stats = compute_stats(&split.scenes, &classes)?;
        println!(
            "{name}: {} images, {} proposals ({} foreground)",
            split.scenes.len(),
            split.proposals.len(),
            split.proposals.num_foreground()
        );
        for (c, rate) in stats.classes.iter().zip(&cfg.class_rates) {
            println!("  {:<7} {:>6} objects  {:.4}/image (configured {:.4})", c.name, c.count, c.frequency, rate);
        }
    }
    if let Some(dir) = std::env::args_os().nth(1) {
        let ds = rebalance::dataset::SyntheticDataset::new(cfg, splits)?;
        ds.write(dir.as_ref())?;
        println!("written to {}", dir.to_string_lossy());
    }
    Ok(())
}
