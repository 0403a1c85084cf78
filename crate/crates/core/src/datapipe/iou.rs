use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vg::BoundingBox;
use crate::error::{Error, Result};

/// Default minimum IoU for a detection to tag a record.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.1;

/// Length of the overlap of `[a0, a0 + aw)` and `[b0, b0 + bw)`.
pub fn overlap_1d(a0: u32, aw: u32, b0: u32, bw: u32) -> u64 {
    let lo = u64::from(a0.max(b0));
    let hi = (u64::from(a0) + u64::from(aw)).min(u64::from(b0) + u64::from(bw));
    hi.saturating_sub(lo)
}

/// Intersection over union with areas `w · h`.
///
/// Both counts are exact integers and the result is a single correctly rounded
/// division, so equal pixel counts always give bit-equal values.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = overlap_1d(a.x, a.w, b.x, b.w) * overlap_1d(a.y, a.h, b.y, b.h);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Reads a detector output file: a JSON array of `{label, box: [x, y, w, h], confidence}`.
pub fn load_detections(path: &Path) -> Result<Vec<DetectedObject>> {
    let text = crate::io::read_to_string(path)?;
    let dets: Vec<DetectedObject> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    for d in &dets {
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("confidence {} of `{}` is outside [0, 1]", d.confidence, d.label),
            });
        }
    }
    Ok(dets)
}

/// How object labels are chosen for a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum TagPolicy {
    /// The single detection with the highest IoU, if it reaches `threshold`.
    Best { threshold: f64 },
    /// Every detected label, deduplicated in input order.
    All,
}

impl Default for TagPolicy {
    fn default() -> Self {
        TagPolicy::Best {
            threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

/// Label of the detection with maximal IoU against `record_box`, if that IoU
/// is at least `threshold`. Ties go to higher confidence, then earlier input.
pub fn select_tag<'a>(record_box: &BoundingBox, detections: &'a [DetectedObject], threshold: f64) -> Option<&'a str> {
    let mut best: Option<(f64, &DetectedObject)> = None;
    for d in detections {
        let v = iou(record_box, &d.bbox);
        let better = match best {
            None => true,
            Some((bv, bd)) => v > bv || (v == bv && d.confidence > bd.confidence),
        };
        if better {
            best = Some((v, d));
        }
    }
    best.filter(|(v, _)| *v >= threshold).map(|(_, d)| d.label.as_str())
}

/// Labels text for a record under `policy`, or `None` when nothing qualifies.
pub fn tag_labels(record_box: &BoundingBox, detections: &[DetectedObject], policy: TagPolicy) -> Option<String> {
    match policy {
        TagPolicy::Best { threshold } => select_tag(record_box, detections, threshold).map(str::to_string),
        TagPolicy::All => {
            let mut seen: Vec<&str> = Vec::new();
            for d in detections {
                if !seen.contains(&d.label.as_str()) {
                    seen.push(&d.label);
                }
            }
            (!seen.is_empty()).then(|| seen.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(label: &str, bbox: BoundingBox, confidence: f64) -> DetectedObject {
        DetectedObject {
            label: label.into(),
            bbox,
            confidence,
        }
    }

    #[test]
    fn spec_examples() {
        assert_eq!(iou(&b(1, 2, 3, 4), &b(1, 2, 3, 4)), 1.0);
        assert_eq!(iou(&b(0, 0, 10, 10), &b(5, 0, 10, 10)), 50.0 / 150.0);
        assert_eq!(iou(&b(0, 0, 10, 10), &b(20, 20, 5, 5)), 0.0);
        assert_eq!(iou(&b(0, 0, 10, 10), &b(10, 0, 5, 5)), 0.0);
    }

    #[test]
    fn selection_rules() {
        let r = b(0, 0, 10, 10);
        assert_eq!(select_tag(&r, &[], 0.1), None);
        // IoU 0.2 (20/100) and 0.8 (80/100).
        let dets = [det("a", b(0, 0, 2, 10), 0.9), det("b", b(0, 0, 8, 10), 0.1)];
        assert_eq!(select_tag(&r, &dets, 0.5), Some("b"));
        assert_eq!(select_tag(&r, &dets, 0.9), None);
        let tie = [det("low", b(0, 0, 5, 10), 0.4), det("high", b(5, 0, 5, 10), 0.9)];
        assert_eq!(select_tag(&r, &tie, 0.1), Some("high"));
        let same = [det("first", b(0, 0, 5, 10), 0.5), det("second", b(5, 0, 5, 10), 0.5)];
        assert_eq!(select_tag(&r, &same, 0.1), Some("first"));
    }

    #[test]
    fn all_labels_dedup_in_order() {
        let r = b(0, 0, 10, 10);
        let dets = [
            det("dog", b(50, 50, 1, 1), 0.2),
            det("cat", b(0, 0, 1, 1), 0.3),
            det("dog", b(0, 0, 1, 1), 0.9),
        ];
        assert_eq!(tag_labels(&r, &dets, TagPolicy::All).as_deref(), Some("dog, cat"));
        assert_eq!(tag_labels(&r, &[], TagPolicy::All), None);
    }

    #[test]
    fn detection_json_round_trip() {
        let json = r#"[{"label":"person","box":[1,2,3,4],"confidence":0.75}]"#;
        let d: Vec<DetectedObject> = serde_json::from_str(json).unwrap();
        assert_eq!(d[0].bbox, b(1, 2, 3, 4));
        assert_eq!(serde_json::to_string(&d).unwrap(), json);
        assert!(serde_json::from_str::<Vec<DetectedObject>>(r#"[{"label":"x","box":[1,2,0,4],"confidence":0.5}]"#).is_err());
    }
}
