//! Scoring detection dumps against ground truth.
//!
//! Two matching schemes are supported: strict VOC2012 one-to-one IoU
//! matching and a SAR-APD-style coverage scheme (see [`Scheme`]). Reports
//! carry precision/recall at an explicit operating threshold plus
//! all-points-interpolated AP.

mod ap;
mod bootstrap;
mod matching;

pub use ap::{average_precision, average_precision_ranked, pr_curve, RankedHit};
pub use bootstrap::{bootstrap_ap_difference, BootstrapResult};
pub use matching::{match_detections, MatchOutcome, MatchPolicy, ScoredBox, Scheme};

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::DetectionsLine;
use crate::geometry::{BoundingBox, Frame};

/// Detections per image id.
pub type Dump = BTreeMap<String, Vec<ScoredBox>>;
/// Ground-truth boxes per image id.
pub type GroundTruth = BTreeMap<String, Vec<BoundingBox>>;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("no images to evaluate")]
    EmptyImageSet,
    #[error("detection dumps cover different image sets")]
    ImageSetMismatch,
    #[error("invalid bootstrap parameters: {0}")]
    Bootstrap(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerImageCounts {
    pub image_id: String,
    /// Ground-truth boxes matched.
    pub tp: usize,
    pub fp: usize,
    /// Ground-truth boxes left unmatched.
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    /// No detections survived the threshold, so precision is 0/0 (reported as 1.0).
    pub precision_vacuous: bool,
    /// No ground truth exists, so recall is 0/0 (reported as 0.0).
    pub recall_vacuous: bool,
    pub tp_detections: usize,
    pub fp: usize,
    pub tp_gt: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: Scheme,
    pub policy: MatchPolicy,
    pub precision: f64,
    pub recall: f64,
    pub precision_vacuous: bool,
    pub recall_vacuous: bool,
    pub average_precision: f64,
    pub operating_threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_image: Vec<PerImageCounts>,
}

fn images_of(dump: &Dump, gt: &GroundTruth) -> Vec<String> {
    let set: BTreeSet<&String> = dump.keys().chain(gt.keys()).collect();
    set.into_iter().cloned().collect()
}

/// Every detection of the dump with its matching outcome, in global rank
/// order: descending score, ties by image id, then x, then y.
pub fn ranked_hits(dump: &Dump, gt: &GroundTruth, policy: &MatchPolicy) -> Vec<RankedHit> {
    let images = images_of(dump, gt);
    let mut rows = Vec::new();
    for (img_idx, id) in images.iter().enumerate() {
        let dets = dump.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let gts = gt.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let m = match_detections(dets, gts, policy);
        for (i, d) in dets.iter().enumerate() {
            rows.push((img_idx, *d, RankedHit { score: d.score, is_tp: m.det_tp[i], gt_gain: m.det_gain[i] }));
        }
    }
    rows.sort_by(|a, b| {
        b.1.score
            .total_cmp(&a.1.score)
            .then(a.0.cmp(&b.0))
            .then(a.1.bbox.x.total_cmp(&b.1.bbox.x))
            .then(a.1.bbox.y.total_cmp(&b.1.bbox.y))
    });
    rows.into_iter().map(|r| r.2).collect()
}

pub fn total_gt(gt: &GroundTruth) -> usize {
    gt.values().map(Vec::len).sum()
}

/// AP of a whole dump.
pub fn dump_average_precision(dump: &Dump, gt: &GroundTruth, policy: &MatchPolicy) -> f64 {
    average_precision_ranked(&ranked_hits(dump, gt, policy), total_gt(gt))
}

fn threshold_dump(dump: &Dump, threshold: f64) -> Dump {
    dump.iter()
        .map(|(k, v)| (k.clone(), v.iter().filter(|d| d.score >= threshold).copied().collect()))
        .collect()
}

fn per_image_counts(dump: &Dump, gt: &GroundTruth, policy: &MatchPolicy) -> (Vec<PerImageCounts>, usize) {
    let mut tp_dets = 0;
    let counts = images_of(dump, gt)
        .into_iter()
        .map(|id| {
            let dets = dump.get(&id).map(Vec::as_slice).unwrap_or(&[]);
            let gts = gt.get(&id).map(Vec::as_slice).unwrap_or(&[]);
            let m = match_detections(dets, gts, policy);
            let tp_d = m.tp_detections();
            tp_dets += tp_d;
            let tp = m.matched_gt();
            PerImageCounts { image_id: id, tp, fp: dets.len() - tp_d, fn_: gts.len() - tp }
        })
        .collect();
    (counts, tp_dets)
}

/// Precision and recall after dropping detections scoring below `threshold`.
pub fn precision_recall_at(dump: &Dump, gt: &GroundTruth, policy: &MatchPolicy, threshold: f64) -> PrecisionRecall {
    let kept = threshold_dump(dump, threshold);
    let (counts, tp_detections) = per_image_counts(&kept, gt, policy);
    let fp: usize = counts.iter().map(|c| c.fp).sum();
    let tp_gt: usize = counts.iter().map(|c| c.tp).sum();
    let fn_: usize = counts.iter().map(|c| c.fn_).sum();
    let (precision, precision_vacuous) = match tp_detections + fp {
        0 => (1.0, true),
        n => (tp_detections as f64 / n as f64, false),
    };
    let (recall, recall_vacuous) = match tp_gt + fn_ {
        0 => (0.0, true),
        n => (tp_gt as f64 / n as f64, false),
    };
    PrecisionRecall { precision, recall, precision_vacuous, recall_vacuous, tp_detections, fp, tp_gt, fn_ }
}

pub fn evaluate(dump: &Dump, gt: &GroundTruth, policy: &MatchPolicy, threshold: f64) -> EvalReport {
    let pr = precision_recall_at(dump, gt, policy, threshold);
    let (per_image, _) = per_image_counts(&threshold_dump(dump, threshold), gt, policy);
    EvalReport {
        scheme: policy.scheme,
        policy: *policy,
        precision: pr.precision,
        recall: pr.recall,
        precision_vacuous: pr.precision_vacuous,
        recall_vacuous: pr.recall_vacuous,
        average_precision: dump_average_precision(dump, gt, policy),
        operating_threshold: threshold,
        tp: pr.tp_gt,
        fp: pr.fp,
        fn_: pr.fn_,
        per_image,
    }
}

/// `score,precision,recall` rows, one per ranked detection.
pub fn pr_curve_csv(dump: &Dump, gt: &GroundTruth, policy: &MatchPolicy) -> String {
    let hits = ranked_hits(dump, gt, policy);
    let mut out = String::from("score,precision,recall\n");
    for (h, (p, r)) in hits.iter().zip(pr_curve(&hits, total_gt(gt))) {
        out.push_str(&format!("{},{},{}\n", h.score, p, r));
    }
    out
}

#[derive(Deserialize, Serialize)]
struct GtFile {
    images: Vec<GtImage>,
}

#[derive(Deserialize, Serialize)]
struct GtImage {
    image_id: String,
    boxes: Vec<[f64; 4]>,
}

pub fn parse_ground_truth(text: &str, origin: &str) -> Result<GroundTruth, EvalError> {
    let file: GtFile = serde_json::from_str(text).map_err(|e| EvalError::Parse {
        path: origin.to_string(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    let mut gt = GroundTruth::new();
    for img in file.images {
        gt.entry(img.image_id)
            .or_default()
            .extend(img.boxes.into_iter().map(|b| BoundingBox::from_xywh(b, Frame::Image)));
    }
    Ok(gt)
}

pub fn ground_truth_to_json(gt: &GroundTruth) -> String {
    let file = GtFile {
        images: gt
            .iter()
            .map(|(k, v)| GtImage { image_id: k.clone(), boxes: v.iter().map(|b| b.to_xywh()).collect() })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("ground truth serializes")
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(path.display().to_string(), e))?;
    parse_ground_truth(&text, &path.display().to_string())
}

/// Reads a `detections.jsonl` file into a dump. Images listed with an error
/// are kept with no detections.
pub fn load_detections(path: &Path) -> Result<Dump, EvalError> {
    let file = std::fs::File::open(path).map_err(|e| EvalError::Io(path.display().to_string(), e))?;
    let mut dump = Dump::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EvalError::Io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DetectionsLine = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        dump.entry(parsed.image_id)
            .or_default()
            .extend(parsed.detections.iter().map(|d| ScoredBox::new(d.bbox(), d.score)));
    }
    Ok(dump)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sb(x: f64, y: f64, s: f64) -> ScoredBox {
        ScoredBox::new(BoundingBox::image(x, y, 10.0, 10.0), s)
    }

    #[test]
    fn perfect_detector() {
        let gt: GroundTruth = BTreeMap::from([("a".into(), vec![BoundingBox::image(0.0, 0.0, 10.0, 10.0)])]);
        let dump: Dump = BTreeMap::from([("a".into(), vec![sb(0.0, 0.0, 0.9)])]);
        let pr = precision_recall_at(&dump, &gt, &MatchPolicy::voc2012(), 0.5);
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
        assert!(!pr.precision_vacuous);
    }

    #[test]
    fn nothing_above_threshold_is_vacuous_precision() {
        let gt: GroundTruth = BTreeMap::from([("a".into(), vec![BoundingBox::image(0.0, 0.0, 10.0, 10.0)])]);
        let dump: Dump = BTreeMap::from([("a".into(), vec![sb(0.0, 0.0, 0.3)])]);
        let pr = precision_recall_at(&dump, &gt, &MatchPolicy::voc2012(), 0.5);
        assert_eq!((pr.precision, pr.recall), (1.0, 0.0));
        assert!(pr.precision_vacuous && !pr.recall_vacuous);
    }

    #[test]
    fn planted_counts() {
        // 20 images; 42 TP, 8 FP, 8 FN planted across them
        let mut gt = GroundTruth::new();
        let mut dump = Dump::new();
        let (mut tp, mut fp, mut fn_) = (42, 8, 8);
        for i in 0..20 {
            let id = format!("img{i:02}");
            let mut g = Vec::new();
            let mut d = Vec::new();
            for k in 0..5 {
                let x = k as f64 * 50.0;
                if tp > 0 && k < 3 {
                    g.push(BoundingBox::image(x, 0.0, 10.0, 10.0));
                    d.push(sb(x, 0.0, 0.9));
                    tp -= 1;
                } else if fp > 0 && k == 3 {
                    d.push(sb(x, 200.0, 0.8));
                    fp -= 1;
                } else if fn_ > 0 && k == 4 {
                    g.push(BoundingBox::image(x, 400.0, 10.0, 10.0));
                    fn_ -= 1;
                }
            }
            gt.insert(id.clone(), g);
            dump.insert(id, d);
        }
        assert_eq!((tp, fp, fn_), (0, 0, 0));
        let report = evaluate(&dump, &gt, &MatchPolicy::voc2012(), 0.5);
        assert_eq!((report.tp, report.fp, report.fn_), (42, 8, 8));
        assert!((report.precision - 0.84).abs() < 1e-12);
        assert!((report.recall - 0.84).abs() < 1e-12);
        for c in &report.per_image {
            assert_eq!(c.tp + c.fn_, gt[&c.image_id].len());
        }
    }

    #[test]
    fn gt_file_round_trip() {
        let text = r#"{"images":[{"image_id":"a","boxes":[[1,2,3,4]]},{"image_id":"b","boxes":[]}]}"#;
        let gt = parse_ground_truth(text, "gt.json").unwrap();
        assert_eq!(gt["a"], vec![BoundingBox::image(1.0, 2.0, 3.0, 4.0)]);
        assert!(gt["b"].is_empty());
        assert_eq!(parse_ground_truth(&ground_truth_to_json(&gt), "x").unwrap(), gt);
    }
}
