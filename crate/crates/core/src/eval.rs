//! Recall at a fixed number of false positives per image.
//!
//! One score threshold is shared by all classes. It is calibrated as the
//! lowest detection score at which the false positives per image stay at or
//! below the target, then per-class, class-average and overall recall are
//! reported at that threshold.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::boxes::iou;
use crate::boxes::BoundingBox;
use crate::classes::ClassTable;
use crate::dataset::{GroundTruthObject, Scene};
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::provenance::{read_bytes, Metadata};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Foreground class index.
    pub class_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub target_fppi: f64,
    /// Count IoU equal to the threshold as a match.
    #[serde(default)]
    pub iou_inclusive: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            target_fppi: 1.0,
            iou_inclusive: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(invalid_config(format!("iou_threshold must lie in (0, 1], got {}", self.iou_threshold)));
        }
        if !(self.target_fppi.is_finite() && self.target_fppi > 0.0) {
            return Err(invalid_config(format!("target_fppi must be > 0, got {}", self.target_fppi)));
        }
        Ok(())
    }

    fn passes(&self, overlap: f64) -> bool {
        if self.iou_inclusive {
            overlap >= self.iou_threshold
        } else {
            overlap > self.iou_threshold
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Matching result for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatch {
    /// Indexed by class; entry 0 (background) stays zero.
    pub counts: Vec<MatchCounts>,
    /// Whether each input detection was a true positive.
    pub is_tp: Vec<bool>,
}

/// Greedy per-class matching of one image's detections.
///
/// Detections are visited by descending score (ties by input order); each
/// takes the unmatched same-class ground truth with the highest IoU and is a
/// true positive if that IoU passes the threshold. Only true positives
/// consume a ground truth.
pub fn match_image(
    detections: &[Detection],
    ground_truth: &[GroundTruthObject],
    num_classes: usize,
    cfg: &EvalConfig,
) -> ImageMatch {
    let mut counts = vec![MatchCounts::default(); num_classes];
    let mut is_tp = vec![false; detections.len()];
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; ground_truth.len()];
    for d in order {
        let det = &detections[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truth.iter().enumerate() {
            if taken[g] || gt.class_index != det.class_index {
                continue;
            }
            let v = iou(&det.bbox, &gt.bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        let c = &mut counts[det.class_index];
        match best {
            Some((g, v)) if cfg.passes(v) => {
                taken[g] = true;
                is_tp[d] = true;
                c.tp += 1;
            }
            _ => c.fp += 1,
        }
    }
    for (gt, t) in ground_truth.iter().zip(taken) {
        if !t {
            counts[gt.class_index].fn_ += 1;
        }
    }
    ImageMatch { counts, is_tp }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub achieved_fppi: f64,
    /// No threshold admits any detection within the FPPI budget.
    pub degenerate: bool,
}

/// Detections grouped by scene index, keeping input order within a scene.
fn group_by_scene<'a>(detections: &'a [Detection], scenes: &[Scene], num_classes: usize) -> Result<Vec<Vec<&'a Detection>>> {
    let index: HashMap<&str, usize> = scenes.iter().enumerate().map(|(i, s)| (s.image_id.as_str(), i)).collect();
    let mut groups = vec![Vec::new(); scenes.len()];
    for d in detections {
        if !(d.score.is_finite() && (0.0..=1.0).contains(&d.score)) {
            return Err(invalid_input(format!("detection score {} outside [0, 1]", d.score)));
        }
        if d.class_index == 0 || d.class_index >= num_classes {
            return Err(invalid_input(format!("detection has invalid class {}", d.class_index)));
        }
        let &i = index
            .get(d.image_id.as_str())
            .ok_or_else(|| invalid_input(format!("detection for unknown image `{}`", d.image_id)))?;
        groups[i].push(d);
    }
    Ok(groups)
}

fn match_groups(groups: &[Vec<&Detection>], scenes: &[Scene], num_classes: usize, cfg: &EvalConfig) -> Vec<ImageMatch> {
    groups
        .par_iter()
        .zip(scenes)
        .map(|(dets, scene)| {
            let owned: Vec<Detection> = dets.iter().map(|d| (*d).clone()).collect();
            match_image(&owned, &scene.objects, num_classes, cfg)
        })
        .collect()
}

/// Smallest threshold at which total FP / images stays within the target.
///
/// The greedy matcher visits detections by descending score, so the
/// decisions for detections above any threshold do not depend on those
/// below it. One full matching pass therefore gives the FP count at every
/// candidate threshold.
pub fn calibrate_threshold(
    detections: &[Detection],
    scenes: &[Scene],
    num_classes: usize,
    cfg: &EvalConfig,
) -> Result<Calibration> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(invalid_input("at least one image is required"));
    }
    let groups = group_by_scene(detections, scenes, num_classes)?;
    let matches = match_groups(&groups, scenes, num_classes, cfg);
    let mut scored: Vec<(f64, bool)> = groups
        .iter()
        .zip(&matches)
        .flat_map(|(dets, m)| dets.iter().zip(&m.is_tp).map(|(d, &tp)| (d.score, !tp)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(sweep(&scored, scenes.len(), cfg.target_fppi))
}

/// `scored` holds `(score, is_fp)` sorted by descending score.
fn sweep(scored: &[(f64, bool)], images: usize, target: f64) -> Calibration {
    let images = images as f64;
    let above_all = |max: f64| Calibration {
        threshold: next_up(max),
        achieved_fppi: 0.0,
        degenerate: true,
    };
    if scored.is_empty() {
        return above_all(1.0);
    }
    let mut best: Option<Calibration> = None;
    let mut fp = 0u64;
    let mut i = 0;
    while i < scored.len() {
        let score = scored[i].0;
        while i < scored.len() && scored[i].0 == score {
            fp += scored[i].1 as u64;
            i += 1;
        }
        let fppi = fp as f64 / images;
        if fppi > target {
            break;
        }
        best = Some(Calibration {
            threshold: score,
            achieved_fppi: fppi,
            degenerate: false,
        });
    }
    best.unwrap_or_else(|| above_all(scored[0].0))
}

fn next_up(x: f64) -> f64 {
    if x >= 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        x
    }
}

pub const REPORT_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    pub name: String,
    pub ground_truth: u64,
    #[serde(flatten)]
    pub counts: MatchCounts,
    /// `None` when the class has no ground truth.
    pub recall: Option<f64>,
}

/// Per-class recall at the calibrated threshold, plus average and overall rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub config: EvalConfig,
    pub image_count: u64,
    pub calibration: Calibration,
    pub classes: Vec<ClassRecall>,
    /// Unweighted mean over classes with ground truth.
    pub class_average_recall: f64,
    /// Total TP over total ground truth.
    pub overall_recall: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

impl EvalReport {
    pub fn check_version(&self) -> Result<()> {
        if self.format_version != REPORT_FILE_VERSION {
            return Err(Error::FormatVersion {
                what: "report file",
                found: self.format_version,
                expected: REPORT_FILE_VERSION,
            });
        }
        Ok(())
    }

    pub fn class(&self, name: &str) -> Option<&ClassRecall> {
        self.classes.iter().find(|c| c.name == name)
    }
}

/// Calibrates the shared threshold and reports recall at it.
pub fn evaluate(detections: &[Detection], scenes: &[Scene], classes: &ClassTable, cfg: &EvalConfig) -> Result<EvalReport> {
    let total_gt: usize = scenes.iter().map(|s| s.objects.len()).sum();
    if total_gt == 0 {
        return Err(invalid_input("ground truth is empty"));
    }
    let n = classes.len();
    for s in scenes {
        if let Some(o) = s.objects.iter().find(|o| o.class_index == 0 || o.class_index >= n) {
            return Err(invalid_input(format!(
                "scene `{}` has invalid class {}",
                s.image_id, o.class_index
            )));
        }
    }
    let calibration = calibrate_threshold(detections, scenes, n, cfg)?;
    let kept: Vec<Detection> = detections
        .iter()
        .filter(|d| d.score >= calibration.threshold)
        .cloned()
        .collect();
    let groups = group_by_scene(&kept, scenes, n)?;
    let mut counts = vec![MatchCounts::default(); n];
    for m in match_groups(&groups, scenes, n, cfg) {
        for (total, c) in counts.iter_mut().zip(m.counts) {
            *total += c;
        }
    }

    let rows: Vec<ClassRecall> = classes
        .foreground()
        .iter()
        .zip(&counts[1..])
        .map(|(name, c)| {
            let gt = c.tp + c.fn_;
            ClassRecall {
                name: name.clone(),
                ground_truth: gt,
                counts: *c,
                recall: (gt > 0).then(|| c.tp as f64 / gt as f64),
            }
        })
        .collect();
    let recalls: Vec<f64> = rows.iter().filter_map(|r| r.recall).collect();
    let class_average_recall = recalls.iter().sum::<f64>() / recalls.len() as f64;
    let total_tp: u64 = counts.iter().map(|c| c.tp).sum();
    Ok(EvalReport {
        format_version: REPORT_FILE_VERSION,
        name: None,
        config: *cfg,
        image_count: scenes.len() as u64,
        calibration,
        classes: rows,
        class_average_recall,
        overall_recall: total_tp as f64 / total_gt as f64,
        metadata: None,
    })
}

#[derive(Deserialize, Serialize)]
struct DetectionRecord {
    image_id: String,
    class: String,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    score: f64,
}

/// Reads a detections file: one JSON object per line with
/// `image_id`, `class`, `x1`, `y1`, `x2`, `y2` and `score`.
pub fn read_detections(path: &Path, classes: &ClassTable) -> Result<Vec<Detection>> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { record: i, message };
        let rec: DetectionRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let class_index = classes
            .foreground_index_ignore_case(&rec.class)
            .ok_or_else(|| parse_err(format!("unknown class `{}`", rec.class)))?;
        let bbox = BoundingBox::new(rec.x1, rec.y1, rec.x2, rec.y2).map_err(|e| parse_err(e.to_string()))?;
        out.push(Detection {
            image_id: rec.image_id,
            bbox,
            class_index,
            score: rec.score,
        });
    }
    Ok(out)
}

pub fn detections_to_jsonl(detections: &[Detection], classes: &ClassTable) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for d in detections {
        let rec = DetectionRecord {
            image_id: d.image_id.clone(),
            class: classes
                .name(d.class_index)
                .ok_or_else(|| invalid_input(format!("invalid class {}", d.class_index)))?
                .to_string(),
            x1: d.bbox.x1,
            y1: d.bbox.y1,
            x2: d.bbox.x2,
            y2: d.bbox.y2,
            score: d.score,
        };
        serde_json::to_writer(&mut buf, &rec)?;
        buf.push(b'\n');
    }
    Ok(buf)
}
