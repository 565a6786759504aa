//! Corpus report: resolution and runtime census, candidate counts per
//! stage, throughput and a confidence-threshold sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detect::{candidate_counts, DetectionsLine};
use crate::ingest::{resolution_census, runtime_census, CorpusManifest, ResolutionCount};
use crate::rx::RxImageOutput;
use crate::triage::Stats;

pub const SWEEP_THRESHOLDS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_RUNTIME_BIN_S: f64 = 60.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub rx_images: usize,
    pub rx_candidate_images: usize,
    pub rx_clusters: usize,
    pub rx_errors: usize,
    pub detect_images: usize,
    pub detect_candidate_images: usize,
    pub detections: usize,
    pub detect_errors: usize,
    pub triage: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub candidate_images: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub images: usize,
    pub videos: usize,
    pub resolution_census: Vec<ResolutionCount>,
    pub runtime_bin_width_s: f64,
    /// Bin index `floor(duration / width)` to video count.
    pub runtime_census: BTreeMap<u64, usize>,
    pub stages: StageCounts,
    /// Images per second for each stage whose timing is known.
    pub throughput_images_per_s: BTreeMap<String, f64>,
    pub threshold_sweep: Vec<SweepRow>,
}

/// Everything the report is computed from; all inputs are optional.
#[derive(Debug, Default)]
pub struct ReportInputs<'a> {
    pub manifest: Option<&'a CorpusManifest>,
    pub rx: Option<&'a [RxImageOutput]>,
    pub detections: Option<&'a [DetectionsLine]>,
    pub triage: Option<Stats>,
    /// `(stage, images processed, seconds)`.
    pub timings: Vec<(String, usize, f64)>,
    pub runtime_bin_width_s: f64,
}

pub fn build_report(inputs: ReportInputs<'_>) -> CorpusReport {
    let bin = if inputs.runtime_bin_width_s > 0.0 { inputs.runtime_bin_width_s } else { DEFAULT_RUNTIME_BIN_S };
    let (images, videos, resolution, runtime) = match inputs.manifest {
        Some(m) => (m.records.len(), m.videos.len(), resolution_census(m), runtime_census(&m.videos, bin)),
        None => (0, 0, Vec::new(), BTreeMap::new()),
    };
    let rx = inputs.rx.unwrap_or(&[]);
    let det = inputs.detections.unwrap_or(&[]);
    let stages = StageCounts {
        rx_images: rx.len(),
        rx_candidate_images: rx.iter().filter(|l| l.is_candidate).count(),
        rx_clusters: rx.iter().filter(|l| l.is_candidate).map(|l| l.clusters.len()).sum(),
        rx_errors: rx.iter().filter(|l| l.error.is_some()).count(),
        detect_images: det.len(),
        detect_candidate_images: det.iter().filter(|l| !l.detections.is_empty()).count(),
        detections: det.iter().map(|l| l.detections.len()).sum(),
        detect_errors: det.iter().filter(|l| l.error.is_some()).count(),
        triage: inputs.triage,
    };
    let threshold_sweep = candidate_counts(det, &SWEEP_THRESHOLDS)
        .into_iter()
        .map(|(t, n)| SweepRow {
            threshold: t,
            candidate_images: n,
            detections: det.iter().flat_map(|l| &l.detections).filter(|d| d.score >= t).count(),
        })
        .collect();
    let throughput_images_per_s = inputs
        .timings
        .into_iter()
        .filter(|(_, n, s)| *n > 0 && *s > 0.0)
        .map(|(stage, n, s)| (stage, n as f64 / s))
        .collect();
    CorpusReport {
        images,
        videos,
        resolution_census: resolution,
        runtime_bin_width_s: bin,
        runtime_census: runtime,
        stages,
        throughput_images_per_s,
        threshold_sweep,
    }
}

/// Long-format CSV: `section,key,value`.
pub fn report_csv(r: &CorpusReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut row = |s: &str, k: String, v: String| w.write_record([s, &k, &v]).expect("in-memory csv");
    row("section", "key".into(), "value".into());
    row("corpus", "images".into(), r.images.to_string());
    row("corpus", "videos".into(), r.videos.to_string());
    for c in &r.resolution_census {
        row("resolution", format!("{}x{}", c.width, c.height), c.count.to_string());
    }
    for (bin, n) in &r.runtime_census {
        row("runtime_bin", format!("{}-{}s", *bin as f64 * r.runtime_bin_width_s, (*bin + 1) as f64 * r.runtime_bin_width_s), n.to_string());
    }
    let s = &r.stages;
    for (k, v) in [
        ("rx_images", s.rx_images),
        ("rx_candidate_images", s.rx_candidate_images),
        ("rx_clusters", s.rx_clusters),
        ("rx_errors", s.rx_errors),
        ("detect_images", s.detect_images),
        ("detect_candidate_images", s.detect_candidate_images),
        ("detections", s.detections),
        ("detect_errors", s.detect_errors),
    ] {
        row("stage", k.into(), v.to_string());
    }
    if let Some(t) = &s.triage {
        for (status, n) in &t.by_status {
            row("triage", serde_json::to_value(status).expect("status").as_str().unwrap_or_default().into(), n.to_string());
        }
    }
    for (stage, v) in &r.throughput_images_per_s {
        row("throughput_images_per_s", stage.clone(), format!("{v:.6}"));
    }
    for t in &r.threshold_sweep {
        row("sweep_candidate_images", format!("{:.1}", t.threshold), t.candidate_images.to_string());
        row("sweep_detections", format!("{:.1}", t.threshold), t.detections.to_string());
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs_give_zeroed_report() {
        let r = build_report(ReportInputs::default());
        assert_eq!(r.images, 0);
        assert!(r.resolution_census.is_empty() && r.runtime_census.is_empty());
        assert_eq!(r.stages, StageCounts::default());
        assert_eq!(r.threshold_sweep.len(), 9);
        assert!(r.threshold_sweep.iter().all(|t| t.candidate_images == 0 && t.detections == 0));
        assert!(report_csv(&r).starts_with("section,key,value\n"));
    }
}
