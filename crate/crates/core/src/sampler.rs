//! Hard negative mining: keep every foreground proposal and a fixed number of
//! background proposals per foreground one.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ProposalBatch;
use crate::error::{invalid_config, invalid_input, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Highest current loss first.
    #[default]
    Hardest,
    /// Seeded uniform sample.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub bg_per_fg: f64,
    pub selection: Selection,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            bg_per_fg: 3.0,
            selection: Selection::Hardest,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bg_per_fg.is_finite() && self.bg_per_fg > 0.0) {
            return Err(invalid_config(format!("bg_per_fg must be > 0, got {}", self.bg_per_fg)));
        }
        Ok(())
    }
}

/// Selects proposals for one training batch.
///
/// Returns every foreground index followed by the selected background
/// indices: `floor(bg_per_fg * num_fg)` of them, or all when fewer exist.
/// `seed` is only used by [`Selection::Random`].
pub fn mine_batch(labels: &[usize], losses: &[f64], cfg: &MiningConfig, seed: u64) -> Result<Vec<usize>> {
    cfg.validate()?;
    if labels.len() != losses.len() {
        return Err(invalid_input(format!(
            "{} labels but {} losses",
            labels.len(),
            losses.len()
        )));
    }
    let mut selected: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 0).collect();
    if selected.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let mut background: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let quota = ((cfg.bg_per_fg * selected.len() as f64).floor() as usize).min(background.len());

    match cfg.selection {
        Selection::Hardest => {
            // descending loss, ties by ascending index; NaN losses sort last
            background.sort_by(|&a, &b| {
                losses[b]
                    .partial_cmp(&losses[a])
                    .unwrap_or_else(|| losses[a].is_nan().cmp(&losses[b].is_nan()))
                    .then(a.cmp(&b))
            });
            selected.extend_from_slice(&background[..quota]);
        }
        Selection::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<usize> = sample(&mut rng, background.len(), quota)
                .into_iter()
                .map(|i| background[i])
                .collect();
            picked.sort_unstable();
            selected.extend(picked);
        }
    }
    Ok(selected)
}

/// [`mine_batch`] over the labels of a proposal batch.
pub fn mine_proposals(batch: &ProposalBatch, losses: &[f64], cfg: &MiningConfig, seed: u64) -> Result<Vec<usize>> {
    mine_batch(&batch.labels(), losses, cfg, seed)
}
