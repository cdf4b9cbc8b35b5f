//! Hard negative mining at a 1:3 foreground:background ratio.

use rebalance::sampler::{mine_batch, MiningConfig, Selection};

fn main() -> rebalance::Result<()> {
    // two foreground proposals among ten
    let labels = [0, 2, 0, 0, 0, 1, 0, 0, 0, 0];
    let losses = [0.05, 1.7, 2.3, 0.01, 0.9, 0.4, 1.1, 0.2, 3.0, 0.6];

    for selection in [Selection::Hardest, Selection::Random] {
        let cfg = MiningConfig { bg_per_fg: 3.0, selection };
        let picked = mine_batch(&labels, &losses, &cfg, 7)?;
        let shown: Vec<String> = picked
            .iter()
            .map(|&i| format!("#{i}({}, {:.2})", if labels[i] == 0 { "bg" } else { "fg" }, losses[i]))
            .collect();
        println!("{selection:?}: {}", shown.join(" "));
    }
    Ok(())
}
