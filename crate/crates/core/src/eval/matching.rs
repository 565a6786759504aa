use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Greedy one-to-one IoU matching.
    Voc2012,
    /// Coverage-based matching: a detection counts when it covers enough of a
    /// ground-truth box; one detection may cover several people and several
    /// detections may cover the same person.
    SarApd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub scheme: Scheme,
    pub iou_threshold: f64,
    pub gt_coverage_threshold: f64,
    pub allow_many_to_one: bool,
}

impl MatchPolicy {
    pub fn voc2012() -> Self {
        Self { scheme: Scheme::Voc2012, iou_threshold: 0.5, gt_coverage_threshold: 0.25, allow_many_to_one: false }
    }

    pub fn sar_apd() -> Self {
        Self { scheme: Scheme::SarApd, iou_threshold: 0.5, gt_coverage_threshold: 0.25, allow_many_to_one: true }
    }

    pub fn for_scheme(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Voc2012 => Self::voc2012(),
            Scheme::SarApd => Self::sar_apd(),
        }
    }
}

/// A scored detection box in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BoundingBox, score: f64) -> Self {
        Self { bbox, score }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    /// Aligned with the input detection order.
    pub det_tp: Vec<bool>,
    /// Ground-truth boxes newly matched by each detection, aligned with input order.
    pub det_gain: Vec<usize>,
    pub gt_matched: Vec<bool>,
}

impl MatchOutcome {
    pub fn tp_detections(&self) -> usize {
        self.det_tp.iter().filter(|&&t| t).count()
    }

    pub fn matched_gt(&self) -> usize {
        self.gt_matched.iter().filter(|&&m| m).count()
    }
}

pub(crate) fn rank_order(a: &ScoredBox, b: &ScoredBox) -> Ordering {
    b.score.total_cmp(&a.score).then(a.bbox.x.total_cmp(&b.bbox.x)).then(a.bbox.y.total_cmp(&b.bbox.y))
}

/// Matches one image's detections against its ground truth. Detections are
/// processed by descending score (ties by x, then y) regardless of input order.
pub fn match_detections(dets: &[ScoredBox], gts: &[BoundingBox], policy: &MatchPolicy) -> MatchOutcome {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| rank_order(&dets[i], &dets[j]).then(i.cmp(&j)));

    let mut det_tp = vec![false; dets.len()];
    let mut det_gain = vec![0; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for i in order {
        let d = &dets[i].bbox;
        match policy.scheme {
            Scheme::Voc2012 => {
                let best = gts
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| !gt_matched[*g])
                    .map(|(g, gt)| (g, d.iou(gt)))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                if let Some((g, iou)) = best {
                    if iou >= policy.iou_threshold {
                        gt_matched[g] = true;
                        det_tp[i] = true;
                        det_gain[i] = 1;
                    }
                }
            }
            Scheme::SarApd => {
                for (g, gt) in gts.iter().enumerate() {
                    let area = gt.area();
                    if area > 0.0 && d.intersection_area(gt) / area >= policy.gt_coverage_threshold {
                        det_tp[i] = true;
                        if !gt_matched[g] {
                            gt_matched[g] = true;
                            det_gain[i] += 1;
                        }
                        if !policy.allow_many_to_one {
                            break;
                        }
                    }
                }
            }
        }
    }
    MatchOutcome { det_tp, det_gain, gt_matched }
}
