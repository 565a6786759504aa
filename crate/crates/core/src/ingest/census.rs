use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{CorpusManifest, VideoInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionCount {
    pub width: u32,
    pub height: u32,
    pub count: usize,
}

/// Tally of distinct `(width, height)` pairs, most common first, ties by size.
pub fn resolution_census(manifest: &CorpusManifest) -> Vec<ResolutionCount> {
    let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
    for r in &manifest.records {
        *counts.entry((r.width_px, r.height_px)).or_default() += 1;
    }
    let mut out: Vec<_> =
        counts.into_iter().map(|((width, height), count)| ResolutionCount { width, height, count }).collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then((a.width, a.height).cmp(&(b.width, b.height))));
    out
}

/// Histogram of video durations; bin `i` holds durations in `[i*w, (i+1)*w)`.
pub fn runtime_census(videos: &[VideoInfo], bin_width_s: f64) -> BTreeMap<u64, usize> {
    assert!(bin_width_s > 0.0, "bin width must be positive");
    let mut bins = BTreeMap::new();
    for v in videos {
        *bins.entry((v.duration_s.max(0.0) / bin_width_s).floor() as u64).or_default() += 1;
    }
    bins
}
