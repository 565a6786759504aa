/// One ranked detection for AP purposes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedHit {
    pub score: f64,
    pub is_tp: bool,
    /// Ground-truth boxes this detection newly covers (0 or 1 under one-to-one matching).
    pub gt_gain: usize,
}

impl RankedHit {
    pub fn one_to_one(score: f64, is_tp: bool) -> Self {
        Self { score, is_tp, gt_gain: usize::from(is_tp) }
    }
}

/// Precision/recall after each rank. `hits` must already be in rank order.
pub fn pr_curve(hits: &[RankedHit], total_gt: usize) -> Vec<(f64, f64)> {
    let (mut tp, mut covered) = (0usize, 0usize);
    hits.iter()
        .enumerate()
        .map(|(i, h)| {
            tp += usize::from(h.is_tp);
            covered += h.gt_gain;
            let recall = if total_gt == 0 { 0.0 } else { covered as f64 / total_gt as f64 };
            (tp as f64 / (i + 1) as f64, recall)
        })
        .collect()
}

/// All-points interpolated average precision.
///
/// Hits are ranked by descending score (stable, so callers control ties).
/// Every rank where recall rises contributes `(r_i - r_{i-1}) * max_{j>=i} p_j`.
pub fn average_precision(hits: &[RankedHit], total_gt: usize) -> f64 {
    if total_gt == 0 || hits.is_empty() {
        return 0.0;
    }
    let mut ranked = hits.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    average_precision_ranked(&ranked, total_gt)
}

/// Like [`average_precision`] but trusts the given order.
pub fn average_precision_ranked(ranked: &[RankedHit], total_gt: usize) -> f64 {
    if total_gt == 0 || ranked.is_empty() {
        return 0.0;
    }
    let curve = pr_curve(ranked, total_gt);
    // suffix maximum of precision
    let mut envelope = vec![0.0f64; curve.len()];
    let mut running = 0.0f64;
    for i in (0..curve.len()).rev() {
        running = running.max(curve[i].0);
        envelope[i] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(_, r)) in curve.iter().enumerate() {
        if r > prev_recall {
            ap += (r - prev_recall) * envelope[i];
            prev_recall = r;
        }
    }
    ap.clamp(0.0, 1.0)
}
