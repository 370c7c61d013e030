//! Detection scoring by one-to-one matching on rasterized IoU.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{mask_iou, GeometryError, Polygon};
use crate::labelgen::AnnotatedInstance;

/// IoU with a don't-care region above which a detection is neutral.
pub const IGNORE_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("IoU threshold {0} outside (0, 1]")]
    ThresholdOutOfRange(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ImageScore {
    /// Ratios from counts. With nothing detected, precision is 1 only if
    /// there was nothing to find; with nothing to find, recall is 1.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else if tp + fn_ > 0 {
            0.0
        } else {
            1.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            1.0
        };
        let f_measure = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f_measure,
            tp,
            fp,
            fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_image: Vec<ImageScore>,
}

impl ScoreReport {
    /// Pools the counts of all images.
    pub fn aggregate(per_image: Vec<ImageScore>) -> Self {
        let (tp, fp, fn_) = per_image
            .iter()
            .fold((0, 0, 0), |(a, b, c), s| (a + s.tp, b + s.fp, c + s.fn_));
        let total = ImageScore::from_counts(tp, fp, fn_);
        Self {
            precision: total.precision,
            recall: total.recall,
            f_measure: total.f_measure,
            tp,
            fp,
            fn_,
            per_image,
        }
    }
}

/// Matches detections to ground truth on one `height x width` image.
pub fn score_image(
    dets: &[Polygon],
    gts: &[AnnotatedInstance],
    height: usize,
    width: usize,
    iou_thr: f64,
) -> Result<ImageScore, EvalError> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(EvalError::ThresholdOutOfRange(iou_thr));
    }
    let det_masks = dets
        .iter()
        .map(|p| p.rasterize(height, width))
        .collect::<Result<Vec<_>, _>>()?;
    let gt_masks = gts
        .iter()
        .map(|g| g.polygon.rasterize(height, width))
        .collect::<Result<Vec<_>, _>>()?;
    let mut iou = vec![vec![0.0; gts.len()]; dets.len()];
    for (d, dm) in det_masks.iter().enumerate() {
        for (g, gm) in gt_masks.iter().enumerate() {
            iou[d][g] = mask_iou(dm, gm)?;
        }
    }

    let neutral: Vec<bool> = iou
        .iter()
        .map(|row| {
            let best = (0..row.len()).fold(None, |b: Option<usize>, g| match b {
                Some(k) if row[k] >= row[g] => Some(k),
                _ => Some(g),
            });
            best.is_some_and(|g| gts[g].ignore && row[g] >= IGNORE_IOU)
        })
        .collect();

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (d, row) in iou.iter().enumerate() {
        if neutral[d] {
            continue;
        }
        for (g, &v) in row.iter().enumerate() {
            if !gts[g].ignore && v >= iou_thr {
                pairs.push((v, g, d));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_used = vec![false; dets.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut tp = 0;
    for (_, g, d) in pairs {
        if !det_used[d] && !gt_used[g] {
            det_used[d] = true;
            gt_used[g] = true;
            tp += 1;
        }
    }
    let fp = (0..dets.len())
        .filter(|&d| !neutral[d] && !det_used[d])
        .count();
    let fn_ = (0..gts.len())
        .filter(|&g| !gts[g].ignore && !gt_used[g])
        .count();
    Ok(ImageScore::from_counts(tp, fp, fn_))
}

/// Scores a single image; the report has one per-image entry.
pub fn match_and_score(
    dets: &[Polygon],
    gts: &[AnnotatedInstance],
    height: usize,
    width: usize,
    iou_thr: f64,
) -> Result<ScoreReport, EvalError> {
    Ok(ScoreReport::aggregate(vec![score_image(
        dets, gts, height, width, iou_thr,
    )?]))
}
