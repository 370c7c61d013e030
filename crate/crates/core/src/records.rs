//! JSON-lines detection output, one image per line:
//!
//! ```text
//! {"image": "img_1", "size": [h, w], "detections": [
//!   {"polygon": [[x, y], ...], "score": s, "disks": [[x, y, r, theta], ...],
//!    "rect": {"center": [x, y], "width": w, "height": h, "angle": a}}]}
//! ```

use serde::{Deserialize, Serialize};

use crate::annotations::{parse_json_line, polygon_from_json, polygon_to_json, ParseError};
use crate::geometry::{disks_union_mask, min_area_rect, Disk, Point2};
use crate::labelgen::SnakeDescriptor;
use crate::postproc::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectJson {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionJson {
    pub polygon: Vec<[f64; 2]>,
    pub score: f64,
    pub disks: Vec<[f64; 4]>,
    pub rect: RectJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image: String,
    pub size: [usize; 2],
    pub detections: Vec<DetectionJson>,
}

impl DetectionJson {
    pub fn from_detection(d: &Detection) -> Self {
        let rect = min_area_rect(d.boundary.vertices()).expect("boundary has finite vertices");
        Self {
            polygon: polygon_to_json(&d.boundary),
            score: d.score,
            disks: d
                .snake
                .disks
                .iter()
                .map(|k| [k.center.x, k.center.y, k.radius, k.theta])
                .collect(),
            rect: RectJson {
                center: [rect.center.x, rect.center.y],
                width: rect.width,
                height: rect.height,
                angle: rect.angle,
            },
        }
    }

    /// Rebuilds the detection on a `height x width` grid; the region is
    /// re-rasterized from the disks.
    pub fn to_detection(&self, height: usize, width: usize) -> Result<Detection, String> {
        let boundary = polygon_from_json(&self.polygon)?;
        let disks: Vec<Disk> = self
            .disks
            .iter()
            .map(|&[x, y, r, t]| Disk::new(Point2::new(x, y), r, t))
            .collect();
        let painted: Vec<Disk> = disks.iter().copied().filter(|d| d.radius > 0.0).collect();
        let region = disks_union_mask(&painted, height, width).map_err(|e| e.to_string())?;
        Ok(Detection {
            snake: SnakeDescriptor::new(disks),
            region,
            boundary,
            score: self.score,
        })
    }
}

impl DetectionRecord {
    pub fn new(image: &str, height: usize, width: usize, dets: &[Detection]) -> Self {
        Self {
            image: image.to_string(),
            size: [height, width],
            detections: dets.iter().map(DetectionJson::from_detection).collect(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn detections(&self) -> Result<Vec<Detection>, String> {
        let [h, w] = self.size;
        self.detections
            .iter()
            .map(|d| d.to_detection(h, w))
            .collect()
    }
}

pub fn parse_detections(text: &str) -> Result<Vec<DetectionRecord>, ParseError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = parse_json_line(raw, k + 1)?;
        for (i, d) in rec.detections.iter().enumerate() {
            polygon_from_json(&d.polygon).map_err(|message| ParseError {
                line: k + 1,
                path: Some(format!("detections[{i}].polygon")),
                message,
            })?;
        }
        out.push(rec);
    }
    Ok(out)
}
