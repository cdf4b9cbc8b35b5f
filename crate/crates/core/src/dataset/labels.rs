//! Annotation readers.
//!
//! `bdd100k` is a JSON array of frames:
//!
//! ```json
//! [{"name": "abc.jpg",
//!   "labels": [{"category": "car", "box2d": {"x1": 1, "y1": 2, "x2": 30, "y2": 40}}]}]
//! ```
//!
//! `simple_jsonl` has one object per line:
//! `{"image_id": "abc", "class": "car", "x1": 1, "y1": 2, "x2": 30, "y2": 40}`.
//! A line with `"class": null` declares an image without objects.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GroundTruthObject, Scene, DEFAULT_IMAGE_HEIGHT, DEFAULT_IMAGE_WIDTH};
use crate::boxes::BoundingBox;
use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::provenance::read_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFormat {
    Bdd100k,
    SimpleJsonl,
}

impl FromStr for LabelFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bdd100k" => Ok(Self::Bdd100k),
            "simple_jsonl" | "simple-jsonl" | "jsonl" => Ok(Self::SimpleJsonl),
            other => Err(format!("unknown label format `{other}`")),
        }
    }
}

/// Labels dropped during parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    /// Labels of categories outside the class table, by category.
    pub other_category: BTreeMap<String, u64>,
    /// Labels without a 2-D box.
    pub missing_box: u64,
    /// Boxes that were empty after clipping to the image.
    pub degenerate_box: u64,
}

impl SkipReport {
    pub fn total(&self) -> u64 {
        self.other_category.values().sum::<u64>() + self.missing_box + self.degenerate_box
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLabels {
    pub classes: ClassTable,
    pub scenes: Vec<Scene>,
    pub skipped: SkipReport,
}

#[derive(Deserialize)]
struct Frame {
    name: String,
    #[serde(default)]
    labels: Option<Vec<FrameLabel>>,
}

#[derive(Deserialize)]
struct FrameLabel {
    category: String,
    #[serde(default)]
    box2d: Option<RawBox>,
}

#[derive(Deserialize)]
struct RawBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

#[derive(Deserialize)]
struct SimpleRecord {
    image_id: String,
    class: Option<String>,
    #[serde(flatten)]
    bbox: Option<RawBox>,
}

/// Parses an annotation file into scenes over the BDD100K class table.
pub fn parse_labels(path: &Path, format: LabelFormat) -> Result<ParsedLabels> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        record: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;
    parse_labels_str(text, format, &ClassTable::bdd100k())
}

pub fn parse_labels_str(text: &str, format: LabelFormat, classes: &ClassTable) -> Result<ParsedLabels> {
    let mut builder = Builder::new(classes);
    match format {
        LabelFormat::Bdd100k => {
            let frames: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
                record: 0,
                message: format!("expected an array of frames: {e}"),
            })?;
            for (i, value) in frames.into_iter().enumerate() {
                let frame: Frame = serde_json::from_value(value).map_err(|e| Error::Parse {
                    record: i,
                    message: e.to_string(),
                })?;
                let scene = builder.scene(&frame.name);
                for label in frame.labels.unwrap_or_default() {
                    builder.add(scene, &label.category, label.box2d.as_ref());
                }
            }
        }
        LabelFormat::SimpleJsonl => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: SimpleRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                    record: i,
                    message: e.to_string(),
                })?;
                let scene = builder.scene(&rec.image_id);
                if let Some(class) = rec.class {
                    builder.add(scene, &class, rec.bbox.as_ref());
                }
            }
        }
    }
    builder.finish()
}

struct Builder<'a> {
    classes: &'a ClassTable,
    scenes: Vec<Scene>,
    by_id: HashMap<String, usize>,
    skipped: SkipReport,
}

impl<'a> Builder<'a> {
    fn new(classes: &'a ClassTable) -> Self {
        Self {
            classes,
            scenes: Vec::new(),
            by_id: HashMap::new(),
            skipped: SkipReport::default(),
        }
    }

    fn scene(&mut self, image_id: &str) -> usize {
        if let Some(&i) = self.by_id.get(image_id) {
            return i;
        }
        self.scenes.push(Scene {
            image_id: image_id.to_string(),
            image_width: DEFAULT_IMAGE_WIDTH,
            image_height: DEFAULT_IMAGE_HEIGHT,
            objects: Vec::new(),
        });
        self.by_id.insert(image_id.to_string(), self.scenes.len() - 1);
        self.scenes.len() - 1
    }

    fn add(&mut self, scene: usize, category: &str, raw: Option<&RawBox>) {
        let Some(class_index) = self.classes.foreground_index_ignore_case(category) else {
            *self.skipped.other_category.entry(category.to_string()).or_default() += 1;
            return;
        };
        let Some(raw) = raw else {
            self.skipped.missing_box += 1;
            return;
        };
        let s = &mut self.scenes[scene];
        let unclipped = BoundingBox {
            x1: raw.x1,
            y1: raw.y1,
            x2: raw.x2,
            y2: raw.y2,
        };
        let finite = [raw.x1, raw.y1, raw.x2, raw.y2].iter().all(|v| v.is_finite());
        match unclipped.clip(s.image_width, s.image_height).filter(|_| finite) {
            Some(bbox) => s.objects.push(GroundTruthObject { bbox, class_index }),
            None => self.skipped.degenerate_box += 1,
        }
    }

    fn finish(self) -> Result<ParsedLabels> {
        if self.scenes.is_empty() {
            return Err(Error::EmptyDataset("label file contains no frames".into()));
        }
        Ok(ParsedLabels {
            classes: self.classes.clone(),
            scenes: self.scenes,
            skipped: self.skipped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_stats;

    fn bdd(text: &str) -> Result<ParsedLabels> {
        parse_labels_str(text, LabelFormat::Bdd100k, &ClassTable::bdd100k())
    }

    #[test]
    fn minimal_frame() {
        let p = bdd(r#"[{"name":"a.jpg","labels":[{"category":"car","box2d":{"x1":1,"y1":2,"x2":30,"y2":40}}]}]"#)
            .unwrap();
        assert_eq!(p.scenes.len(), 1);
        assert_eq!(p.scenes[0].objects.len(), 1);
        assert_eq!(p.scenes[0].objects[0].class_index, 1);
        assert_eq!(p.skipped.total(), 0);
    }

    #[test]
    fn other_categories_are_skipped() {
        let p = bdd(
            r#"[{"name":"a.jpg","labels":[
                {"category":"traffic light","box2d":{"x1":1,"y1":2,"x2":30,"y2":40}},
                {"category":"Person","box2d":{"x1":1,"y1":2,"x2":30,"y2":40}},
                {"category":"drivable area","poly2d":[]}
            ]}]"#,
        )
        .unwrap();
        assert_eq!(p.scenes[0].objects.len(), 1);
        assert_eq!(p.skipped.other_category["traffic light"], 1);
        assert_eq!(p.skipped.other_category["drivable area"], 1);
        let p = bdd(r#"[{"name":"a.jpg","labels":[{"category":"bus"}]}]"#).unwrap();
        assert_eq!(p.skipped.missing_box, 1);
    }

    #[test]
    fn hand_counted_stats() {
        let p = bdd(
            r#"[
            {"name":"1","labels":[{"category":"car","box2d":{"x1":1,"y1":1,"x2":9,"y2":9}},
                                  {"category":"car","box2d":{"x1":20,"y1":1,"x2":29,"y2":9}}]},
            {"name":"2","labels":[]},
            {"name":"3","labels":[{"category":"CAR","box2d":{"x1":1,"y1":1,"x2":9,"y2":9}}]}
            ]"#,
        )
        .unwrap();
        let stats = compute_stats(&p.scenes, &p.classes).unwrap();
        assert_eq!(stats.get("car").unwrap().count, 3);
        assert_eq!(stats.get("car").unwrap().frequency, 1.0);
    }

    #[test]
    fn boxes_are_clipped() {
        let p = bdd(r#"[{"name":"a","labels":[
            {"category":"bus","box2d":{"x1":-4,"y1":700,"x2":50,"y2":800}},
            {"category":"bus","box2d":{"x1":1300,"y1":0,"x2":1400,"y2":10}}]}]"#)
        .unwrap();
        let b = p.scenes[0].objects[0].bbox;
        assert_eq!((b.x1, b.y2), (0.0, 720.0));
        assert_eq!(p.skipped.degenerate_box, 1);
    }

    #[test]
    fn malformed_documents() {
        match bdd(r#"[{"name":"a","labels":[]}, {"labels":[]}]"#) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(bdd("{}"), Err(Error::Parse { .. })));
        assert!(matches!(bdd("[]"), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn simple_jsonl() {
        let text = concat!(
            r#"{"image_id":"a","class":"bike","x1":1,"y1":1,"x2":5,"y2":5}"#,
            "\n",
            r#"{"image_id":"b","class":null}"#,
            "\n\n",
            r#"{"image_id":"a","class":"motor","x1":1,"y1":1,"x2":5,"y2":5}"#,
            "\n",
        );
        let p = parse_labels_str(text, LabelFormat::SimpleJsonl, &ClassTable::bdd100k()).unwrap();
        assert_eq!(p.scenes.len(), 2);
        assert_eq!(p.scenes[0].objects.len(), 2);
        assert!(p.scenes[1].objects.is_empty());
        let bad = parse_labels_str("{\"image_id\":1}", LabelFormat::SimpleJsonl, &ClassTable::bdd100k());
        assert!(matches!(bad, Err(Error::Parse { record: 0, .. })));
    }
}
