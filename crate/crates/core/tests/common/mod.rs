//! Test-only oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rebalance::dataset::{GroundTruthObject, Scene};
use rebalance::eval::{iou, Detection, EvalConfig};
use rebalance::BoundingBox;

fn passes(v: f64, cfg: &EvalConfig) -> bool {
    if cfg.iou_inclusive {
        v >= cfg.iou_threshold
    } else {
        v > cfg.iou_threshold
    }
}

/// Largest number of true positives over every assignment of one class's
/// detections to distinct ground truths, by exhaustive search.
pub fn brute_force_max_tp(dets: &[BoundingBox], gts: &[BoundingBox], cfg: &EvalConfig) -> usize {
    fn go(i: usize, dets: &[BoundingBox], gts: &[BoundingBox], used: &mut Vec<bool>, cfg: &EvalConfig) -> usize {
        if i == dets.len() {
            return 0;
        }
        // detection i unassigned
        let mut best = go(i + 1, dets, gts, used, cfg);
        for g in 0..gts.len() {
            if !used[g] && passes(iou(&dets[i], &gts[g]), cfg) {
                used[g] = true;
                best = best.max(1 + go(i + 1, dets, gts, used, cfg));
                used[g] = false;
            }
        }
        best
    }
    go(0, dets, gts, &mut vec![false; gts.len()], cfg)
}

/// Random scene with up to `max_per_class` ground truths and detections per
/// class. Ground truths are placed independently and may overlap unless
/// `disjoint` is set, in which case same-class ground truths never
/// intersect. Most detections are jittered copies of a ground truth, the
/// rest are random.
pub fn random_scene(
    rng: &mut ChaCha8Rng,
    id: &str,
    num_classes: usize,
    max_per_class: usize,
    disjoint: bool,
) -> (Scene, Vec<Detection>) {
    let size = 100.0;
    let rand_box = |rng: &mut ChaCha8Rng| {
        let w = rng.random_range(8.0..40.0);
        let h = rng.random_range(8.0..40.0);
        let x = rng.random_range(0.0..size - w);
        let y = rng.random_range(0.0..size - h);
        BoundingBox::new(x, y, x + w, y + h).unwrap()
    };
    let mut objects = Vec::new();
    let mut dets = Vec::new();
    for class_index in 1..num_classes {
        let n_gt = rng.random_range(0..=max_per_class);
        let start = objects.len();
        for _ in 0..n_gt {
            let bbox = loop {
                let b = rand_box(rng);
                if !disjoint || objects[start..].iter().all(|o: &GroundTruthObject| iou(&o.bbox, &b) == 0.0) {
                    break b;
                }
            };
            objects.push(GroundTruthObject { bbox, class_index });
        }
        let n_det = rng.random_range(0..=max_per_class);
        for _ in 0..n_det {
            let bbox = if n_gt > 0 && rng.random_bool(0.75) {
                let g = objects[start + rng.random_range(0..n_gt)].bbox;
                let j = 0.25 * g.width().min(g.height());
                let (dx, dy) = (rng.random_range(-j..=j), rng.random_range(-j..=j));
                g.translate(dx, dy)
            } else {
                rand_box(rng)
            };
            // coarse scores make ties common
            let score = (rng.random_range(0..=20) as f64) / 20.0;
            dets.push(Detection {
                image_id: id.into(),
                bbox,
                class_index,
                score,
            });
        }
    }
    let scene = Scene {
        image_id: id.into(),
        image_width: size,
        image_height: size,
        objects,
    };
    (scene, dets)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reference calibration: re-match the detections kept at every distinct
/// score and keep the lowest score whose false positives per image stay
/// within the target. Returns `None` when no score qualifies.
pub fn naive_threshold(dets: &[Detection], scenes: &[Scene], num_classes: usize, cfg: &EvalConfig) -> Option<(f64, f64)> {
    let mut scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    let mut best = None;
    for t in scores {
        let mut fp = 0;
        for s in scenes {
            let kept: Vec<Detection> = dets
                .iter()
                .filter(|d| d.image_id == s.image_id && d.score >= t)
                .cloned()
                .collect();
            let m = rebalance::eval::match_image(&kept, &s.objects, num_classes, cfg);
            fp += m.counts.iter().map(|c| c.fp).sum::<u64>();
        }
        let fppi = fp as f64 / scenes.len() as f64;
        if fppi <= cfg.target_fppi {
            best = Some((t, fppi));
        }
    }
    best
}

pub fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2).unwrap()
}

pub fn det(image: &str, b: BoundingBox, class_index: usize, score: f64) -> Detection {
    Detection {
        image_id: image.into(),
        bbox: b,
        class_index,
        score,
    }
}

/// Two images, two classes, seven detections. Worked by hand:
///
/// ```text
/// score  image class  outcome
/// 0.9    a     1      TP  exact on a/1
/// 0.8    a     2      FP  no overlap
/// 0.7    b     1      TP  exact on b/1
/// 0.6    a     1      FP  duplicate of a/1
/// 0.5    b     2      FP  no class-2 object in b
/// 0.4    a     2      TP  exact on a/2
/// 0.3    b     1      FP  IoU 0.25 with b/1
/// ```
///
/// Cumulative FP per image by threshold: 0.9→0, 0.8→0.5, 0.7→0.5, 0.6→1.0,
/// 0.5→1.5, 0.4→1.5, 0.3→2.0.
pub fn hand_fixture() -> (Vec<Scene>, Vec<Detection>) {
    let a1 = bx(0.0, 0.0, 10.0, 10.0);
    let a2 = bx(20.0, 20.0, 30.0, 30.0);
    let b1 = bx(50.0, 50.0, 60.0, 60.0);
    let scene = |id: &str, objects: Vec<(BoundingBox, usize)>| Scene {
        image_id: id.into(),
        image_width: 100.0,
        image_height: 100.0,
        objects: objects
            .into_iter()
            .map(|(bbox, class_index)| GroundTruthObject { bbox, class_index })
            .collect(),
    };
    let scenes = vec![scene("a", vec![(a1, 1), (a2, 2)]), scene("b", vec![(b1, 1)])];
    let dets = vec![
        det("a", a1, 1, 0.9),
        det("a", bx(70.0, 70.0, 80.0, 80.0), 2, 0.8),
        det("b", b1, 1, 0.7),
        det("a", a1, 1, 0.6),
        det("b", a2, 2, 0.5),
        det("a", a2, 2, 0.4),
        det("b", bx(50.0, 50.0, 55.0, 55.0), 1, 0.3),
    ];
    (scenes, dets)
}

/// Class columns of the published weight table (no rider column).
pub const TABLE_CLASSES: [&str; 6] = ["car", "truck", "bus", "person", "motor", "bike"];
pub const TABLE_BALANCED: [f64; 7] = [1.0, 1.0, 5.0, 5.0, 5.0, 5.0, 5.0];
pub const TABLE_LINEAR: [f64; 7] = [1.0, 1.0, 2.92, 7.63, 1.37, 32.53, 12.87];
pub const TABLE_LOG: [f64; 7] = [1.0, 1.0, 4.66, 8.82, 1.38, 15.12, 11.10];
pub const TABLE_EFFECTIVE: [f64; 7] = [1.0, 1.0, 5.14, 6.68, 5.00, 17.95, 8.93];

/// Per-image frequencies back-solved from the linear column, `f = k / w`
/// with k = 0.5. Car is pinned to 1 in the table, so its frequency is not
/// recoverable; any value above k works once car is floored.
pub fn table_frequencies() -> Vec<(&'static str, f64)> {
    let mut f = vec![("car", 5.0)];
    for (i, name) in TABLE_CLASSES.iter().enumerate().skip(1) {
        f.push((name, 0.5 / TABLE_LINEAR[i + 1]));
    }
    f
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)`, or 0 when the difference is below `abs_floor`.
pub fn relative_error(a: f64, b: f64, abs_floor: f64) -> f64 {
    let d = (a - b).abs();
    if d < abs_floor {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}
