//! Percentile bootstrap over images for the AP difference of two detectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ap::{average_precision_ranked, RankedHit};
use super::matching::{match_detections, MatchPolicy, ScoredBox};
use super::{Dump, EvalError, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub delta_ap: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

struct ImageHits {
    hits: Vec<(ScoredBox, RankedHit)>,
    gt_count: usize,
}

fn precompute(images: &[&String], dump: &Dump, gt: &GroundTruth, policy: &MatchPolicy) -> Vec<ImageHits> {
    images
        .iter()
        .map(|id| {
            let dets = dump.get(*id).map(Vec::as_slice).unwrap_or(&[]);
            let gts = gt.get(*id).map(Vec::as_slice).unwrap_or(&[]);
            let m = match_detections(dets, gts, policy);
            ImageHits {
                hits: dets
                    .iter()
                    .enumerate()
                    .map(|(i, d)| (*d, RankedHit { score: d.score, is_tp: m.det_tp[i], gt_gain: m.det_gain[i] }))
                    .collect(),
                gt_count: gts.len(),
            }
        })
        .collect()
}

/// AP of a multiset of images given by position indices into `per_image`.
fn resampled_ap(per_image: &[ImageHits], picks: &[usize]) -> f64 {
    let mut rows: Vec<(usize, &ScoredBox, RankedHit)> = Vec::new();
    let mut total_gt = 0;
    for &p in picks {
        total_gt += per_image[p].gt_count;
        rows.extend(per_image[p].hits.iter().map(|(b, h)| (p, b, *h)));
    }
    rows.sort_by(|a, b| {
        b.1.score
            .total_cmp(&a.1.score)
            .then(a.0.cmp(&b.0))
            .then(a.1.bbox.x.total_cmp(&b.1.bbox.x))
            .then(a.1.bbox.y.total_cmp(&b.1.bbox.y))
    });
    let ranked: Vec<RankedHit> = rows.into_iter().map(|r| r.2).collect();
    average_precision_ranked(&ranked, total_gt)
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Resamples images with replacement and reports `AP_A - AP_B` with a
/// percentile confidence interval. Resample `r` draws from its own ChaCha
/// stream `r` under `seed`, so results do not depend on thread count.
pub fn bootstrap_ap_difference(
    dump_a: &Dump,
    dump_b: &Dump,
    gt: &GroundTruth,
    policy: &MatchPolicy,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult, EvalError> {
    if resamples == 0 {
        return Err(EvalError::Bootstrap("need at least one resample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::Bootstrap(format!("confidence level must be in (0, 1), got {level}")));
    }
    let keys_a: std::collections::BTreeSet<&String> = dump_a.keys().collect();
    let keys_b: std::collections::BTreeSet<&String> = dump_b.keys().collect();
    if keys_a != keys_b {
        return Err(EvalError::ImageSetMismatch);
    }
    let images: Vec<&String> = keys_a.union(&gt.keys().collect()).copied().collect();
    if images.is_empty() {
        return Err(EvalError::EmptyImageSet);
    }

    let a = precompute(&images, dump_a, gt, policy);
    let b = precompute(&images, dump_b, gt, policy);
    let all: Vec<usize> = (0..images.len()).collect();
    let delta_ap = resampled_ap(&a, &all) - resampled_ap(&b, &all);

    let n = images.len();
    let mut deltas: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            resampled_ap(&a, &picks) - resampled_ap(&b, &picks)
        })
        .collect();
    deltas.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapResult {
        delta_ap,
        ci_low: quantile(&deltas, tail),
        ci_high: quantile(&deltas, 1.0 - tail),
        resamples,
        level,
        seed,
    })
}
