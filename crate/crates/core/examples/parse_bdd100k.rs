//! Parsing BDD100K-style annotations and computing class statistics.
//!
//! Pass a label file to parse it; without arguments a small inline sample is
//! used.

use rebalance::dataset::{compute_stats, parse_labels, parse_labels_str, LabelFormat};
use rebalance::ClassTable;

const SAMPLE: &str = r#"[
  {"name": "0001.jpg", "labels": [
    {"category": "car", "box2d": {"x1": 10, "y1": 300, "x2": 180, "y2": 420}},
    {"category": "car", "box2d": {"x1": 400, "y1": 310, "x2": 520, "y2": 400}},
    {"category": "person", "box2d": {"x1": 700, "y1": 280, "x2": 730, "y2": 370}},
    {"category": "traffic light", "box2d": {"x1": 600, "y1": 100, "x2": 615, "y2": 140}},
    {"category": "lane", "poly2d": []}]},
  {"name": "0002.jpg", "labels": [
    {"category": "bus", "box2d": {"x1": 200, "y1": 200, "x2": 600, "y2": 500}},
    {"category": "bike", "box2d": {"x1": 1250, "y1": 400, "x2": 1320, "y2": 480}}]}
]"#;

fn main() -> rebalance::Result<()> {
    let parsed = match std::env::args_os().nth(1) {
        Some(path) => parse_labels(path.as_ref(), LabelFormat::Bdd100k)?,
        None => parse_labels_str(SAMPLE, LabelFormat::Bdd100k, &ClassTable::bdd100k())?,
    };
    let stats = compute_stats(&parsed.scenes, &parsed.classes)?;
    println!("{} images", stats.image_count);
    for c in &stats.classes {
        println!("{:<8} {:>6} instances  {:.4} per image", c.name, c.count, c.frequency);
    }
    println!("skipped: {:?}", parsed.skipped);
    Ok(())
}
