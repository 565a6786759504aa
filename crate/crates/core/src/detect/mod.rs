//! Tiled detection: cut an image into fixed-size tiles, run a pluggable
//! detector on each, fuse boxes within a tile, move them to image
//! coordinates, merge what touches across tiles and apply the confidence
//! threshold.

mod backend;
mod fusion;
pub mod protocol;
mod tiling;

pub use backend::{DetectorBackend, SubprocessBackend, SyntheticBackend, TileInput, MAGENTA};
pub use fusion::{boxes_connect, merge_overlapping, weighted_box_fusion};
pub use tiling::{crop_tile, pad_replicate, tile_grid, TileRect};

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Frame};
use crate::ingest::{CorpusManifest, ImageRecord};

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error(transparent)]
    Protocol(#[from] protocol::ProtocolError),
    #[error("detector backend failed: {0}")]
    Backend(String),
    #[error("detection refers to unknown tile index {0}")]
    UnknownTile(usize),
    #[error("backend returned {got} results for {expected} tiles")]
    ResultCount { expected: usize, got: usize },
    #[error("decoding {path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("invalid detect configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub label: String,
    pub tile_index: Option<usize>,
    /// Number of source boxes folded into this one.
    pub contributors: usize,
}

impl Detection {
    pub fn new(bbox: BoundingBox, score: f64) -> Self {
        Self { bbox, score, label: protocol::default_label(), tile_index: None, contributors: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub tile_size: u32,
    pub tile_overlap: u32,
    pub wbf_iou: f64,
    pub confidence_threshold: f64,
    pub max_detections_per_image: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { tile_size: 512, tile_overlap: 0, wbf_iou: 0.55, confidence_threshold: 0.5, max_detections_per_image: 100 }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.tile_size == 0 || self.tile_overlap >= self.tile_size {
            return Err(DetectError::Config(format!(
                "need 0 <= tile_overlap < tile_size, got overlap {} size {}",
                self.tile_overlap, self.tile_size
            )));
        }
        if !(self.wbf_iou > 0.0 && self.wbf_iou < 1.0) {
            return Err(DetectError::Config(format!("wbf_iou must be in (0, 1), got {}", self.wbf_iou)));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(DetectError::Config(format!(
                "confidence_threshold must be in [0, 1], got {}",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

/// Runs the backend on every tile; boxes are validated and clipped to the tile.
pub fn run_detector(
    image_id: &str,
    tiles: &[(TileRect, RgbImage)],
    backend: &dyn DetectorBackend,
) -> Result<BTreeMap<usize, Vec<Detection>>, DetectError> {
    let inputs: Vec<TileInput<'_>> = tiles
        .iter()
        .map(|(rect, pixels)| TileInput { tile_id: format!("{image_id}:{}", rect.index), rect: *rect, pixels })
        .collect();
    let raw = backend.detect(&inputs)?;
    if raw.len() != tiles.len() {
        return Err(DetectError::ResultCount { expected: tiles.len(), got: raw.len() });
    }
    let mut out = BTreeMap::new();
    for ((rect, _), boxes) in tiles.iter().zip(raw) {
        let mut dets = Vec::with_capacity(boxes.len());
        for b in boxes {
            b.check().map_err(|reason| {
                DetectError::Protocol(protocol::ProtocolError::InvalidBox {
                    line: serde_json::to_string(&b).unwrap_or_default(),
                    reason,
                })
            })?;
            let size = rect.size as f64;
            if let Some(clipped) = BoundingBox::new(b.x, b.y, b.w, b.h, Frame::Tile).clamp_to(size, size) {
                dets.push(Detection {
                    bbox: clipped,
                    score: b.score,
                    label: b.label,
                    tile_index: Some(rect.index),
                    contributors: 1,
                });
            }
        }
        out.insert(rect.index, dets);
    }
    Ok(out)
}

/// Translates tile-frame detections into the image frame and clamps them.
pub fn project_to_image(
    per_tile: &BTreeMap<usize, Vec<Detection>>,
    tiles: &[TileRect],
    image_width: u32,
    image_height: u32,
) -> Result<Vec<Detection>, DetectError> {
    let mut out = Vec::new();
    for (&idx, dets) in per_tile {
        for d in dets {
            let tile_idx = d.tile_index.unwrap_or(idx);
            let tile = tiles.iter().find(|t| t.index == tile_idx).ok_or(DetectError::UnknownTile(tile_idx))?;
            let moved = BoundingBox { frame: Frame::Image, ..d.bbox.translate(tile.x as f64, tile.y as f64) };
            if let Some(bbox) = moved.clamp_to(image_width as f64, image_height as f64) {
                out.push(Detection { bbox, ..d.clone() });
            }
        }
    }
    Ok(out)
}

/// Keeps detections scoring at least `threshold`, best first, at most `max`.
pub fn apply_threshold(mut dets: Vec<Detection>, threshold: f64, max: usize) -> Vec<Detection> {
    dets.retain(|d| d.score >= threshold);
    dets.sort_by(fusion::by_score_then_position);
    dets.truncate(max);
    dets
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<Detection>,
    pub is_candidate: bool,
}

/// Tile, detect, fuse, project, merge and threshold one decoded image.
pub fn detect_pipeline(
    image_id: &str,
    pixels: &RgbImage,
    cfg: &DetectConfig,
    backend: &dyn DetectorBackend,
) -> Result<ImageDetections, DetectError> {
    cfg.validate()?;
    let (w, h) = pixels.dimensions();
    if w == 0 || h == 0 {
        return Err(DetectError::Decode { path: image_id.into(), reason: "empty image".into() });
    }
    let padded = pad_replicate(pixels, cfg.tile_size, cfg.tile_size);
    let tiles = tile_grid(padded.width(), padded.height(), cfg.tile_size, cfg.tile_overlap);
    let crops: Vec<(TileRect, RgbImage)> = tiles.iter().map(|t| (*t, crop_tile(&padded, t))).collect();

    let per_tile = run_detector(image_id, &crops, backend)?;
    let fused: BTreeMap<usize, Vec<Detection>> =
        per_tile.into_iter().map(|(i, dets)| (i, weighted_box_fusion(&dets, cfg.wbf_iou))).collect();
    let projected = project_to_image(&fused, &tiles, w, h)?;
    let merged = merge_overlapping(&projected);
    let detections = apply_threshold(merged, cfg.confidence_threshold, cfg.max_detections_per_image);
    Ok(ImageDetections { image_id: image_id.to_string(), is_candidate: !detections.is_empty(), detections })
}

/// Line of `detections.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsLine {
    pub image_id: String,
    pub detections: Vec<DetectionOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOut {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    #[serde(default = "protocol::default_label")]
    pub label: String,
    #[serde(default = "one")]
    pub contributors: usize,
}

fn one() -> usize {
    1
}

impl DetectionOut {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::image(self.x, self.y, self.w, self.h)
    }
}

impl From<&Detection> for DetectionOut {
    fn from(d: &Detection) -> Self {
        Self {
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            score: d.score,
            label: d.label.clone(),
            contributors: d.contributors,
        }
    }
}

impl From<&ImageDetections> for DetectionsLine {
    fn from(d: &ImageDetections) -> Self {
        Self { image_id: d.image_id.clone(), detections: d.detections.iter().map(Into::into).collect(), error: None }
    }
}

pub fn detect_record(
    manifest: &CorpusManifest,
    record: &ImageRecord,
    cfg: &DetectConfig,
    backend: &dyn DetectorBackend,
) -> DetectionsLine {
    let path = manifest.resolve(record);
    let run = || -> Result<ImageDetections, DetectError> {
        let pixels = load(&path)?;
        detect_pipeline(&record.id, &pixels, cfg, backend)
    };
    match run() {
        Ok(d) => (&d).into(),
        Err(e) => {
            log::warn!("detect {}: {e}", record.id);
            DetectionsLine { image_id: record.id.clone(), detections: vec![], error: Some(e.to_string()) }
        }
    }
}

fn load(path: &Path) -> Result<RgbImage, DetectError> {
    crate::raster::load_rgb8(path).map_err(|e| DetectError::Decode { path: path.display().to_string(), reason: e.to_string() })
}

/// Detects over the whole manifest; output follows manifest order and one
/// image's failure never aborts the batch.
pub fn run_detect(manifest: &CorpusManifest, cfg: &DetectConfig, backend: &dyn DetectorBackend) -> Vec<DetectionsLine> {
    manifest.records.par_iter().map(|r| detect_record(manifest, r, cfg, backend)).collect()
}

/// Number of images with at least one detection at or above each threshold.
pub fn candidate_counts(lines: &[DetectionsLine], thresholds: &[f64]) -> Vec<(f64, usize)> {
    thresholds
        .iter()
        .map(|&t| (t, lines.iter().filter(|l| l.detections.iter().any(|d| d.score >= t)).count()))
        .collect()
}
