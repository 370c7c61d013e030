//! Label generation followed by reconstruction, scored against the source
//! polygons.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::AnnotationRecord;
use crate::evalkit::{score_image, EvalError, ImageScore, ScoreReport};
use crate::geometry::{mask_iou, GeometryError, Polygon};
use crate::labelgen::{generate_labels, LabelError, Sampling};
use crate::postproc::{detect, Detection, PostprocError, PostprocParams};

/// Per-instance IoU regarded as a faithful reconstruction.
pub const FAITHFUL_IOU: f64 = 0.85;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{image}: {source}")]
    Label {
        image: String,
        #[source]
        source: LabelError,
    },
    #[error("{image}: {source}")]
    Postproc {
        image: String,
        #[source]
        source: PostprocError,
    },
    #[error("{image}: {source}")]
    Eval {
        image: String,
        #[source]
        source: EvalError,
    },
    #[error("{image}: {source}")]
    Geometry {
        image: String,
        #[source]
        source: GeometryError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripImage {
    pub image: String,
    pub instances: usize,
    pub detections: usize,
    /// Best IoU of any detection with each non-ignored instance, in input order.
    pub ious: Vec<f64>,
    pub score: ImageScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub images: usize,
    pub instances: usize,
    pub count_match_images: usize,
    pub faithful_instances: usize,
    pub faithful_iou: f64,
    pub mean_iou: f64,
    pub min_iou: f64,
    pub score: ScoreReport,
    pub per_image: Vec<RoundTripImage>,
}

impl RoundTripReport {
    pub fn count_match_fraction(&self) -> f64 {
        if self.images == 0 {
            1.0
        } else {
            self.count_match_images as f64 / self.images as f64
        }
    }

    pub fn faithful_fraction(&self) -> f64 {
        if self.instances == 0 {
            1.0
        } else {
            self.faithful_instances as f64 / self.instances as f64
        }
    }
}

/// Generates labels for one record and reconstructs them.
pub fn roundtrip_image(
    rec: &AnnotationRecord,
    params: &PostprocParams,
) -> Result<(RoundTripImage, Vec<Detection>), PipelineError> {
    let image = rec.image_id.clone();
    let (h, w) = (rec.height, rec.width);
    let set = generate_labels(&rec.instances, h, w, Sampling::default()).map_err(|source| {
        PipelineError::Label {
            image: image.clone(),
            source,
        }
    })?;
    let dets = detect(&set.maps, params).map_err(|source| PipelineError::Postproc {
        image: image.clone(),
        source,
    })?;
    let geometry = |source| PipelineError::Geometry {
        image: image.clone(),
        source,
    };
    let mut ious = Vec::new();
    for inst in rec.instances.iter().filter(|i| !i.ignore) {
        let gt = inst.polygon.rasterize(h, w).map_err(geometry)?;
        let mut best = 0.0f64;
        for d in &dets {
            best = best.max(mask_iou(&d.region, &gt).map_err(geometry)?);
        }
        ious.push(best);
    }
    let polys: Vec<Polygon> = dets.iter().map(|d| d.boundary.clone()).collect();
    let score =
        score_image(&polys, &rec.instances, h, w, 0.5).map_err(|source| PipelineError::Eval {
            image: image.clone(),
            source,
        })?;
    Ok((
        RoundTripImage {
            instances: ious.len(),
            detections: dets.len(),
            ious,
            score,
            image,
        },
        dets,
    ))
}

pub fn summarize(per_image: Vec<RoundTripImage>) -> RoundTripReport {
    let all: Vec<f64> = per_image
        .iter()
        .flat_map(|p| p.ious.iter().copied())
        .collect();
    let instances = all.len();
    RoundTripReport {
        images: per_image.len(),
        instances,
        count_match_images: per_image
            .iter()
            .filter(|p| p.instances == p.detections)
            .count(),
        faithful_instances: all.iter().filter(|&&v| v >= FAITHFUL_IOU).count(),
        faithful_iou: FAITHFUL_IOU,
        mean_iou: if instances == 0 {
            0.0
        } else {
            all.iter().sum::<f64>() / instances as f64
        },
        min_iou: all.iter().copied().fold(f64::INFINITY, f64::min).min(1.0),
        score: ScoreReport::aggregate(per_image.iter().map(|p| p.score).collect()),
        per_image,
    }
}

/// Round trip over many records; the parallel variant gives identical output.
pub fn roundtrip(
    records: &[AnnotationRecord],
    params: &PostprocParams,
    parallel: bool,
) -> Result<RoundTripReport, PipelineError> {
    let per_image: Vec<RoundTripImage> = if parallel {
        records
            .par_iter()
            .map(|r| roundtrip_image(r, params).map(|x| x.0))
            .collect::<Result<_, _>>()?
    } else {
        records
            .iter()
            .map(|r| roundtrip_image(r, params).map(|x| x.0))
            .collect::<Result<_, _>>()?
    };
    Ok(summarize(per_image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_snakes, SynthParams};

    #[test]
    fn small_corpus_round_trip() {
        let p = SynthParams {
            seed: 11,
            images: 10,
            ..SynthParams::default()
        };
        let (recs, _) = synth_snakes(&p).unwrap();
        let rep = roundtrip(&recs, &PostprocParams::default(), false).unwrap();
        assert_eq!(rep.images, 10);
        assert!(
            rep.faithful_fraction() >= 0.9,
            "{}",
            rep.faithful_fraction()
        );
        assert!(rep.count_match_fraction() >= 0.9);
        let par = roundtrip(&recs, &PostprocParams::default(), true).unwrap();
        assert_eq!(
            serde_json::to_string(&rep).unwrap(),
            serde_json::to_string(&par).unwrap()
        );
    }

    #[test]
    fn empty_input() {
        let rep = roundtrip(&[], &PostprocParams::default(), false).unwrap();
        assert_eq!((rep.images, rep.instances), (0, 0));
        assert_eq!(rep.count_match_fraction(), 1.0);
    }
}
