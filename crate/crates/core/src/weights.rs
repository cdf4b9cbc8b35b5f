//! Per-class static loss weights derived from class statistics.
//!
//! Background always keeps weight 1. The inverse-frequency schemes accept a
//! set of majority classes that are pinned to 1 regardless of the formula,
//! mirroring how frequent classes are usually left unweighted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::provenance::Metadata;

pub const WEIGHT_FILE_VERSION: u32 = 1;

/// One static weight per class, background included, aligned with a [`ClassTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    classes: ClassTable,
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(classes: ClassTable, weights: Vec<f64>) -> Result<Self> {
        let w = Self { classes, weights };
        w.validate()?;
        Ok(w)
    }

    pub fn ones(classes: ClassTable) -> Self {
        let weights = vec![1.0; classes.len()];
        Self { classes, weights }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.classes.len() {
            return Err(invalid_input(format!(
                "{} weights for {} classes",
                self.weights.len(),
                self.classes.len()
            )));
        }
        for (name, w) in self.classes.names().iter().zip(&self.weights) {
            if !w.is_finite() || *w <= 0.0 {
                return Err(invalid_config(format!(
                    "weight for `{name}` must be finite and > 0, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> &ClassTable {
        &self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, class: &str) -> Option<f64> {
        self.classes.index_of(class).map(|i| self.weights[i])
    }
}

/// Instance count and per-image frequency of one foreground class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub name: String,
    /// Total number of instances, `n_j`.
    pub count: u64,
    /// Average number of instances per image, `f_j = n_j / image_count`.
    pub frequency: f64,
}

/// Foreground class statistics over a set of images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub image_count: u64,
    pub classes: Vec<ClassCount>,
}

impl ClassStats {
    /// Builds statistics from raw counts, deriving each frequency.
    pub fn from_counts<'a, I>(image_count: u64, counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        if image_count == 0 {
            return Err(invalid_input("image_count must be positive"));
        }
        let classes = counts
            .into_iter()
            .map(|(name, count)| ClassCount {
                name: name.to_string(),
                count,
                frequency: count as f64 / image_count as f64,
            })
            .collect();
        let stats = Self {
            image_count,
            classes,
        };
        stats.class_table()?;
        Ok(stats)
    }

    /// Statistics with explicit per-image frequencies (counts are rounded).
    pub fn from_frequencies<'a, I>(image_count: u64, freqs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        if image_count == 0 {
            return Err(invalid_input("image_count must be positive"));
        }
        let classes = freqs
            .into_iter()
            .map(|(name, frequency)| ClassCount {
                name: name.to_string(),
                count: (frequency * image_count as f64).round() as u64,
                frequency,
            })
            .collect();
        let stats = Self {
            image_count,
            classes,
        };
        stats.class_table()?;
        Ok(stats)
    }

    pub fn class_table(&self) -> Result<ClassTable> {
        ClassTable::from_foreground(self.classes.iter().map(|c| c.name.clone()))
    }

    pub fn get(&self, name: &str) -> Option<&ClassCount> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// The class with the most instances; ties go to the earliest class.
    pub fn most_frequent(&self) -> Option<&ClassCount> {
        self.classes
            .iter()
            .fold(None, |best: Option<&ClassCount>, c| match best {
                Some(b) if b.count >= c.count => Some(b),
                _ => Some(c),
            })
    }
}

/// Post-processing applied to the inverse-frequency schemes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    /// Classes whose weight is pinned to 1.
    #[serde(default)]
    pub majority_floor: Vec<String>,
    /// Lower bound for classes not in `majority_floor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_weight: Option<f64>,
}

impl Clamp {
    pub fn floor<I, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            majority_floor: classes.into_iter().map(Into::into).collect(),
            min_weight: None,
        }
    }

    fn check(&self, stats: &ClassStats) -> Result<()> {
        for name in &self.majority_floor {
            if stats.get(name).is_none() {
                return Err(invalid_config(format!("unknown floor class `{name}`")));
            }
        }
        if let Some(m) = self.min_weight {
            if !m.is_finite() || m <= 0.0 {
                return Err(invalid_config(format!("min_weight must be > 0, got {m}")));
            }
        }
        Ok(())
    }

    fn apply(&self, name: &str, raw: f64) -> f64 {
        if self.majority_floor.iter().any(|n| n == name) {
            1.0
        } else if let Some(m) = self.min_weight {
            raw.max(m)
        } else {
            raw
        }
    }
}

/// Which figure plays the role of `n_j` in the effective-number formula.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Total instance count over the split.
    #[default]
    RawCount,
    /// Average instances per image.
    PerImage,
}

/// How effective numbers turn into weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveForm {
    /// `w_j = E_ref / E_j`: rarer classes get larger weights.
    #[default]
    InverseNormalized,
    /// `w_j = E_j` exactly as the formula reads; grows with class size.
    Literal,
}

fn default_log_base() -> f64 {
    std::f64::consts::E
}

fn is_natural_base(b: &f64) -> bool {
    *b == std::f64::consts::E
}

/// Weighting scheme and its hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SchemeConfig {
    Uniform,
    Balanced {
        manual_weights: BTreeMap<String, f64>,
    },
    InverseLinear {
        k: f64,
        #[serde(flatten)]
        clamp: Clamp,
    },
    InverseLog {
        q: f64,
        #[serde(default = "default_log_base", skip_serializing_if = "is_natural_base")]
        log_base: f64,
        #[serde(flatten)]
        clamp: Clamp,
    },
    EffectiveNumber {
        beta: f64,
        /// Class pinned to weight 1; defaults to the most frequent class.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalize_reference: Option<String>,
        #[serde(default)]
        count_mode: CountMode,
        #[serde(default)]
        form: EffectiveForm,
    },
}

impl SchemeConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeConfig::Uniform => "uniform",
            SchemeConfig::Balanced { .. } => "balanced",
            SchemeConfig::InverseLinear { .. } => "inverse_linear",
            SchemeConfig::InverseLog { .. } => "inverse_log",
            SchemeConfig::EffectiveNumber { .. } => "effective_number",
        }
    }

    pub fn effective_number(beta: f64) -> Self {
        SchemeConfig::EffectiveNumber {
            beta,
            normalize_reference: None,
            count_mode: CountMode::default(),
            form: EffectiveForm::default(),
        }
    }
}

pub fn uniform_weights(classes: &ClassTable) -> WeightVector {
    WeightVector::ones(classes.clone())
}

/// Hand-chosen weights; background and unmentioned classes keep weight 1.
pub fn balanced_weights(classes: &ClassTable, manual: &BTreeMap<String, f64>) -> Result<WeightVector> {
    let mut weights = vec![1.0; classes.len()];
    for (name, &w) in manual {
        let idx = match classes.index_of(name) {
            Some(i) if i > 0 => i,
            _ => return Err(invalid_config(format!("unknown foreground class `{name}`"))),
        };
        weights[idx] = w;
    }
    WeightVector::new(classes.clone(), weights)
}

/// `w_j = k / f_j`, then clamped.
pub fn inverse_linear_weights(stats: &ClassStats, k: f64, clamp: &Clamp) -> Result<WeightVector> {
    if !(k.is_finite() && k > 0.0) {
        return Err(invalid_config(format!("k must be > 0, got {k}")));
    }
    clamp.check(stats)?;
    inverse_weights(stats, clamp, |c| {
        if c.frequency <= 0.0 {
            return Err(Error::ZeroFrequency {
                class: c.name.clone(),
            });
        }
        Ok(k / c.frequency)
    })
}

/// `w_j = log_base(q / f_j)`, then clamped.
pub fn inverse_log_weights(stats: &ClassStats, q: f64, log_base: f64, clamp: &Clamp) -> Result<WeightVector> {
    if !(log_base.is_finite() && log_base > 1.0) {
        return Err(invalid_config(format!("log base must be > 1, got {log_base}")));
    }
    if !q.is_finite() {
        return Err(invalid_config(format!("q must be finite, got {q}")));
    }
    clamp.check(stats)?;
    let natural = is_natural_base(&log_base);
    inverse_weights(stats, clamp, |c| {
        if c.frequency <= 0.0 {
            return Err(Error::ZeroFrequency {
                class: c.name.clone(),
            });
        }
        if q <= c.frequency {
            return Err(invalid_config(format!(
                "q = {q} must exceed the frequency of `{}` ({})",
                c.name, c.frequency
            )));
        }
        let ratio = q / c.frequency;
        Ok(if natural { ratio.ln() } else { ratio.log(log_base) })
    })
}

fn inverse_weights<F>(stats: &ClassStats, clamp: &Clamp, mut raw: F) -> Result<WeightVector>
where
    F: FnMut(&ClassCount) -> Result<f64>,
{
    let table = stats.class_table()?;
    let mut weights = vec![1.0];
    for c in &stats.classes {
        let w = if clamp.majority_floor.contains(&c.name) {
            1.0
        } else {
            clamp.apply(&c.name, raw(c)?)
        };
        weights.push(w);
    }
    WeightVector::new(table, weights)
}

/// Effective number of samples, `(1 - beta^n) / (1 - beta)`.
pub fn effective_number(n: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        // 0^0 = 1 would otherwise give E = 0 at n = 0.
        return if n > 0.0 { 1.0 } else { 0.0 };
    }
    (1.0 - beta.powf(n)) / (1.0 - beta)
}

/// Class weights inversely proportional to the effective number of samples.
///
/// The reference class (default: most frequent) gets weight exactly 1 and
/// background keeps 1.
pub fn effective_number_weights(
    stats: &ClassStats,
    beta: f64,
    normalize_reference: Option<&str>,
    count_mode: CountMode,
    form: EffectiveForm,
) -> Result<WeightVector> {
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid_config(format!("beta must lie in [0, 1), got {beta}")));
    }
    let table = stats.class_table()?;
    let mut effective = Vec::with_capacity(stats.classes.len());
    for c in &stats.classes {
        let n = match count_mode {
            CountMode::RawCount => {
                if c.count == 0 {
                    return Err(Error::ZeroCount {
                        class: c.name.clone(),
                    });
                }
                c.count as f64
            }
            CountMode::PerImage => {
                if c.frequency <= 0.0 {
                    return Err(Error::ZeroCount {
                        class: c.name.clone(),
                    });
                }
                c.frequency
            }
        };
        effective.push(effective_number(n, beta));
    }

    let mut weights = vec![1.0];
    match form {
        EffectiveForm::Literal => weights.extend(effective),
        EffectiveForm::InverseNormalized => {
            let reference = match normalize_reference {
                Some(name) => stats
                    .classes
                    .iter()
                    .position(|c| c.name == name)
                    .ok_or_else(|| invalid_config(format!("unknown reference class `{name}`")))?,
                None => {
                    let top = stats
                        .most_frequent()
                        .ok_or_else(|| invalid_input("statistics have no classes"))?;
                    stats.classes.iter().position(|c| c.name == top.name).unwrap()
                }
            };
            let e_ref = effective[reference];
            weights.extend(effective.iter().map(|e| e_ref / e));
        }
    }
    WeightVector::new(table, weights)
}

/// Weights together with the scheme that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub format_version: u32,
    pub scheme: SchemeConfig,
    /// Number of images the statistics were computed over, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_count: Option<u64>,
    pub classes: Vec<ClassWeight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeight {
    pub name: String,
    pub weight: f64,
}

impl WeightFile {
    pub fn new(scheme: SchemeConfig, weights: &WeightVector, image_count: Option<u64>) -> Self {
        Self {
            format_version: WEIGHT_FILE_VERSION,
            scheme,
            image_count,
            classes: weights
                .classes()
                .names()
                .iter()
                .zip(weights.weights())
                .map(|(name, &weight)| ClassWeight {
                    name: name.clone(),
                    weight,
                })
                .collect(),
            metadata: None,
        }
    }

    pub fn weight_vector(&self) -> Result<WeightVector> {
        if self.format_version != WEIGHT_FILE_VERSION {
            return Err(Error::FormatVersion {
                what: "weight file",
                found: self.format_version,
                expected: WEIGHT_FILE_VERSION,
            });
        }
        let table = ClassTable::new(self.classes.iter().map(|c| c.name.clone()).collect())?;
        WeightVector::new(table, self.classes.iter().map(|c| c.weight).collect())
    }
}

/// Routes a scheme config to its weight function.
///
/// `classes` must agree with the classes covered by `stats`, except for the
/// uniform and balanced schemes which need no statistics.
pub fn scheme_dispatch(cfg: &SchemeConfig, stats: Option<&ClassStats>, classes: &ClassTable) -> Result<WeightFile> {
    let need_stats = || -> Result<&ClassStats> {
        let stats = stats.ok_or_else(|| invalid_config(format!("scheme `{}` needs class statistics", cfg.name())))?;
        if &stats.class_table()? != classes {
            return Err(invalid_config("class statistics do not match the class table"));
        }
        Ok(stats)
    };
    let weights = match cfg {
        SchemeConfig::Uniform => uniform_weights(classes),
        SchemeConfig::Balanced { manual_weights } => balanced_weights(classes, manual_weights)?,
        SchemeConfig::InverseLinear { k, clamp } => inverse_linear_weights(need_stats()?, *k, clamp)?,
        SchemeConfig::InverseLog { q, log_base, clamp } => {
            inverse_log_weights(need_stats()?, *q, *log_base, clamp)?
        }
        SchemeConfig::EffectiveNumber {
            beta,
            normalize_reference,
            count_mode,
            form,
        } => effective_number_weights(need_stats()?, *beta, normalize_reference.as_deref(), *count_mode, *form)?,
    };
    Ok(WeightFile::new(cfg.clone(), &weights, stats.map(|s| s.image_count)))
}
