//! Candidate review store: candidates from the rx and detect stages, an
//! append-only verdict log, and the HTTP API reviewers talk to.

mod http;
mod store;

pub use http::{router, serve};
pub use store::{replay_log, ListFilter, Page, Stats, TriageStore, LOG_FILE, OUTLINE_COLOR, SNAPSHOT_FILE};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::DetectionsLine;
use crate::geometry::BoundingBox;
use crate::ingest::{CorpusManifest, GpsCoord};
use crate::rx::RxImageOutput;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;
pub const DEFAULT_CONTEXT_PX: u32 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Rx,
    Detect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Pending,
    Dismissed,
    Elevated,
    Unsure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Dismissed,
    Elevated,
    Unsure,
}

impl From<Decision> for CandidateStatus {
    fn from(d: Decision) -> Self {
        match d {
            Decision::Dismissed => Self::Dismissed,
            Decision::Elevated => Self::Elevated,
            Decision::Unsure => Self::Unsure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate_id: String,
    pub image_id: String,
    pub source: CandidateSource,
    /// Native image frame.
    pub region: BoundingBox,
    pub score: Option<f64>,
    pub gps: Option<GpsCoord>,
    pub status: CandidateStatus,
    pub created_at: DateTime<Utc>,
    /// Image file as recorded in the manifest, relative to the corpus root.
    pub source_path: String,
}

/// One line of the verdict log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub candidate_id: String,
    pub decision: Decision,
    pub reviewer: String,
    #[serde(default)]
    pub notes: String,
    pub decided_at: DateTime<Utc>,
}

/// Body of a verdict submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub decision: Decision,
    #[serde(default)]
    pub reviewer: String,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TriageError {
    #[error("unknown candidate {0}")]
    NotFound(String),
    #[error("source image for candidate {0} is gone: {1}")]
    SourceGone(String, String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("cannot decode source image: {0}")]
    Decode(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("store is corrupt: {0}")]
    Corrupt(String),
}

/// Content hash of `(image_id, source, region)`, hex, 128 bits.
pub fn candidate_id(image_id: &str, source: CandidateSource, region: &BoundingBox) -> String {
    let source = match source {
        CandidateSource::Rx => "rx",
        CandidateSource::Detect => "detect",
    };
    let mut h = Sha256::new();
    h.update(image_id.as_bytes());
    h.update([0]);
    h.update(source.as_bytes());
    h.update([0]);
    h.update(format!("{:.6},{:.6},{:.6},{:.6}", region.x, region.y, region.w, region.h).as_bytes());
    hex::encode(&h.finalize()[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSkip {
    pub image_id: String,
    pub reason: String,
}

/// Turns stage outputs into pending candidates. Rx clusters are taken from
/// images flagged as candidates; every final detection becomes one candidate.
/// Regions are clamped to the image, GPS is copied from the manifest record.
pub fn build_candidates(
    rx: &[RxImageOutput],
    detections: &[DetectionsLine],
    manifest: &CorpusManifest,
    created_at: DateTime<Utc>,
) -> (Vec<CandidateRecord>, Vec<CandidateSkip>) {
    let records = manifest.by_id();
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    let mut regions: Vec<(&str, CandidateSource, BoundingBox, Option<f64>)> = Vec::new();
    for line in rx.iter().filter(|l| l.is_candidate && l.error.is_none()) {
        for c in &line.clusters {
            let [x, y, w, h] = c.bbox_native.map(f64::from);
            regions.push((&line.image_id, CandidateSource::Rx, BoundingBox::image(x, y, w, h), None));
        }
    }
    for line in detections.iter().filter(|l| l.error.is_none()) {
        for d in &line.detections {
            regions.push((&line.image_id, CandidateSource::Detect, d.bbox(), Some(d.score.clamp(0.0, 1.0))));
        }
    }
    for (image_id, source, region, score) in regions {
        let Some(rec) = records.get(image_id) else {
            skipped.push(CandidateSkip { image_id: image_id.to_string(), reason: "image id not in manifest".into() });
            continue;
        };
        let Some(region) = region.clamp_to(rec.width_px as f64, rec.height_px as f64) else {
            skipped.push(CandidateSkip { image_id: image_id.to_string(), reason: "region lies outside the image".into() });
            continue;
        };
        out.push(CandidateRecord {
            candidate_id: candidate_id(image_id, source, &region),
            image_id: image_id.to_string(),
            source,
            region,
            score,
            gps: rec.gps,
            status: CandidateStatus::Pending,
            created_at,
            source_path: rec.source_path.clone(),
        });
    }
    for s in &skipped {
        log::warn!("candidate on {} skipped: {}", s.image_id, s.reason);
    }
    (out, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_depend_on_content_only() {
        let r = BoundingBox::image(1.0, 2.0, 3.0, 4.0);
        let a = candidate_id("img", CandidateSource::Rx, &r);
        assert_eq!(a, candidate_id("img", CandidateSource::Rx, &r));
        assert_ne!(a, candidate_id("img", CandidateSource::Detect, &r));
        assert_ne!(a, candidate_id("img2", CandidateSource::Rx, &r));
        assert_eq!(a.len(), 32);
    }
}
