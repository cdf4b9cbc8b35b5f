//! Recall at a fixed number of false positives per image.

use rebalance::dataset::{GroundTruthObject, Scene};
use rebalance::eval::{evaluate, Detection, EvalConfig};
use rebalance::{BoundingBox, ClassTable};

fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2).unwrap()
}

fn main() -> rebalance::Result<()> {
    let classes = ClassTable::from_foreground(["car", "bike"])?;
    let scene = |id: &str, objects: Vec<(BoundingBox, usize)>| Scene {
        image_id: id.into(),
        image_width: 640.0,
        image_height: 480.0,
        objects: objects
            .into_iter()
            .map(|(bbox, class_index)| GroundTruthObject { bbox, class_index })
            .collect(),
    };
    let scenes = vec![
        scene("a", vec![(b(0.0, 0.0, 50.0, 50.0), 1), (b(100.0, 0.0, 130.0, 40.0), 2)]),
        scene("b", vec![(b(10.0, 10.0, 60.0, 60.0), 1)]),
    ];
    let det = |image: &str, bbox, class_index, score| Detection {
        image_id: image.into(),
        bbox,
        class_index,
        score,
    };
    let detections = vec![
        det("a", b(2.0, 0.0, 52.0, 50.0), 1, 0.95),
        det("b", b(200.0, 200.0, 260.0, 250.0), 1, 0.9),
        det("b", b(12.0, 10.0, 60.0, 62.0), 1, 0.8),
        det("a", b(300.0, 0.0, 330.0, 40.0), 2, 0.7),
        det("a", b(101.0, 0.0, 131.0, 40.0), 2, 0.4),
    ];

    for target in [0.5, 1.0, 1.5] {
        let cfg = EvalConfig {
            target_fppi: target,
            ..Default::default()
        };
        let r = evaluate(&detections, &scenes, &classes, &cfg)?;
        let per_class: Vec<String> = r
            .classes
            .iter()
            .map(|c| format!("{} {}/{}", c.name, c.counts.tp, c.ground_truth))
            .collect();
        println!(
            "FPPI <= {target}: threshold {:.2} (achieved {:.2}), {}, average {:.3}, overall {:.3}",
            r.calibration.threshold,
            r.calibration.achieved_fppi,
            per_class.join(", "),
            r.class_average_recall,
            r.overall_recall
        );
    }
    Ok(())
}
