//! Unsupervised candidate screening.
//!
//! Each image is resized to a fixed square, every pixel is scored by its
//! Mahalanobis distance from the image's mean color, distances are turned
//! into one-sided p-values, and the flagged pixels are clustered with DBSCAN.
//! An image becomes a candidate when the number of sufficiently large
//! clusters falls inside `[min_clusters, max_clusters]`.

mod dbscan;
mod mahalanobis;
mod mask;

pub use dbscan::{dbscan, DbscanOutcome};
pub use mahalanobis::{color_stats, rx_distances, ColorStats};
pub use mask::{anomaly_mask, anomaly_mask_with, normal_upper_critical, threshold_distance, PValueMode};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Frame};
use crate::ingest::{CorpusManifest, ImageRecord};
use crate::raster::{self, RgbF32};

#[derive(Debug, thiserror::Error)]
pub enum RxError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("color covariance is singular even after regularization")]
    SingularCovariance,
    #[error("decoding {path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("invalid rx configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxConfig {
    pub resize_to: u32,
    pub p_threshold: f64,
    pub dbscan_eps: f64,
    /// Used both as DBSCAN `min_samples` and as the post-clustering size floor.
    pub min_cluster_pixels: usize,
    pub min_clusters: usize,
    pub max_clusters: usize,
    pub covariance_ridge: f64,
    pub p_value_mode: PValueMode,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            resize_to: 1024,
            p_threshold: 0.0001,
            dbscan_eps: 14.4815,
            min_cluster_pixels: 209,
            min_clusters: 1,
            max_clusters: 4,
            covariance_ridge: 1e-6,
            p_value_mode: PValueMode::ZScore,
        }
    }
}

impl RxConfig {
    pub fn validate(&self) -> Result<(), RxError> {
        let bad = |m: String| Err(RxError::Config(m));
        if self.resize_to == 0 {
            return bad("resize_to must be positive".into());
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return bad(format!("p_threshold must be in (0, 1), got {}", self.p_threshold));
        }
        if !(self.dbscan_eps > 0.0) {
            return bad(format!("dbscan_eps must be positive, got {}", self.dbscan_eps));
        }
        if self.min_clusters > self.max_clusters {
            return bad(format!("min_clusters {} exceeds max_clusters {}", self.min_clusters, self.max_clusters));
        }
        if !(self.covariance_ridge >= 0.0) {
            return bad(format!("covariance_ridge must be nonnegative, got {}", self.covariance_ridge));
        }
        Ok(())
    }
}

/// Per-pixel scores and flags for one resized image.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyField {
    pub width: u32,
    pub height: u32,
    pub distances: Vec<f64>,
    pub mask: Vec<bool>,
    pub threshold_distance: Option<f64>,
}

impl AnomalyField {
    pub fn compute(image: &RgbF32, cfg: &RxConfig) -> Result<Self, RxError> {
        let distances = rx_distances(image, cfg.covariance_ridge)?;
        let threshold = threshold_distance(&distances, cfg.p_threshold, cfg.p_value_mode);
        let mask = match threshold {
            Some(t) => distances.iter().map(|&d| d > t).collect(),
            None => vec![false; distances.len()],
        };
        Ok(Self { width: image.width(), height: image.height(), distances, mask, threshold_distance: threshold })
    }

    /// Flagged pixel coordinates in row-major order.
    pub fn anomalous_pixels(&self) -> Vec<(u32, u32)> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| ((i % self.width as usize) as u32, (i / self.width as usize) as u32))
            .collect()
    }
}

/// A cluster of flagged pixels in resized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelCluster {
    pub member_pixels: Vec<(u32, u32)>,
    /// Tight pixel-extent box: `x..x+w` spans the min to max member column inclusive.
    pub bbox: BoundingBox,
    /// Mean member pixel index.
    pub centroid: (f64, f64),
}

impl PixelCluster {
    pub fn from_pixels(member_pixels: Vec<(u32, u32)>) -> Self {
        assert!(!member_pixels.is_empty(), "cluster without members");
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(x, y) in &member_pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            sx += x as f64;
            sy += y as f64;
        }
        let n = member_pixels.len() as f64;
        Self {
            bbox: BoundingBox::from_corners(x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0, Frame::Image),
            centroid: (sx / n, sy / n),
            member_pixels,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.member_pixels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxResult {
    pub image_id: String,
    pub clusters: Vec<PixelCluster>,
    pub is_candidate: bool,
    /// Multiply resized coordinates by these to get native coordinates.
    pub scale_factors: (f64, f64),
    pub native_size: (u32, u32),
}

impl RxResult {
    /// Cluster box in native pixels, expanded outward to whole pixels and clamped.
    pub fn native_bbox(&self, cluster: &PixelCluster) -> BoundingBox {
        to_native(&cluster.bbox, self.scale_factors, self.native_size)
    }

    pub fn to_output(&self) -> RxImageOutput {
        RxImageOutput {
            image_id: self.image_id.clone(),
            is_candidate: self.is_candidate,
            clusters: self
                .clusters
                .iter()
                .map(|c| {
                    let b = self.native_bbox(c);
                    let (sx, sy) = self.scale_factors;
                    ClusterOutput {
                        bbox_native: [b.x as u32, b.y as u32, b.w as u32, b.h as u32],
                        pixel_count: c.pixel_count(),
                        centroid: [(c.centroid.0 + 0.5) * sx, (c.centroid.1 + 0.5) * sy],
                    }
                })
                .collect(),
            error: None,
        }
    }
}

pub(crate) fn to_native(b: &BoundingBox, (sx, sy): (f64, f64), (w, h): (u32, u32)) -> BoundingBox {
    let x0 = (b.x * sx).floor().clamp(0.0, w as f64);
    let y0 = (b.y * sy).floor().clamp(0.0, h as f64);
    let x1 = (b.x1() * sx).ceil().clamp(0.0, w as f64);
    let y1 = (b.y1() * sy).ceil().clamp(0.0, h as f64);
    BoundingBox::from_corners(x0, y0, x1, y1, Frame::Image)
}

/// Line of `rx_results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxImageOutput {
    pub image_id: String,
    pub is_candidate: bool,
    pub clusters: Vec<ClusterOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutput {
    pub bbox_native: [u32; 4],
    pub pixel_count: usize,
    pub centroid: [f64; 2],
}

/// Drops clusters below the size floor; candidacy needs the survivor count in range.
pub fn filter_clusters(clusters: Vec<PixelCluster>, cfg: &RxConfig) -> (Vec<PixelCluster>, bool) {
    let kept: Vec<_> = clusters.into_iter().filter(|c| c.pixel_count() >= cfg.min_cluster_pixels).collect();
    let n = kept.len();
    (kept, n >= cfg.min_clusters && n <= cfg.max_clusters)
}

/// Full per-image screen on already-decoded native pixels.
pub fn rx_pipeline(record: &ImageRecord, pixels: &RgbF32, cfg: &RxConfig) -> Result<RxResult, RxError> {
    cfg.validate()?;
    if pixels.pixel_count() == 0 {
        return Err(RxError::EmptyImage);
    }
    let side = cfg.resize_to;
    let resized = raster::resize_bilinear(pixels, side, side);
    let scale_factors = (pixels.width() as f64 / side as f64, pixels.height() as f64 / side as f64);
    let native_size = (pixels.width(), pixels.height());

    let field = match AnomalyField::compute(&resized, cfg) {
        Ok(f) => f,
        Err(RxError::SingularCovariance) => {
            log::warn!("{}: singular color covariance, treating as no anomalies", record.id);
            return Ok(RxResult { image_id: record.id.clone(), clusters: vec![], is_candidate: false, scale_factors, native_size });
        }
        Err(e) => return Err(e),
    };
    let pixels_xy = field.anomalous_pixels();
    let points: Vec<[f64; 2]> = pixels_xy.iter().map(|&(x, y)| [x as f64, y as f64]).collect();
    let outcome = dbscan(&points, cfg.dbscan_eps, cfg.min_cluster_pixels);
    let clusters = outcome
        .clusters
        .into_iter()
        .map(|members| PixelCluster::from_pixels(members.into_iter().map(|i| pixels_xy[i]).collect()))
        .collect();
    let (clusters, is_candidate) = filter_clusters(clusters, cfg);
    Ok(RxResult { image_id: record.id.clone(), clusters, is_candidate, scale_factors, native_size })
}

/// Decodes and screens one manifest record; failures become error lines.
pub fn rx_record(manifest: &CorpusManifest, record: &ImageRecord, cfg: &RxConfig) -> RxImageOutput {
    let path = manifest.resolve(record);
    let run = || -> Result<RxResult, RxError> {
        let pixels = load(&path)?;
        rx_pipeline(record, &pixels, cfg)
    };
    match run() {
        Ok(r) => r.to_output(),
        Err(e) => {
            log::warn!("rx {}: {e}", record.id);
            RxImageOutput { image_id: record.id.clone(), is_candidate: false, clusters: vec![], error: Some(e.to_string()) }
        }
    }
}

fn load(path: &Path) -> Result<RgbF32, RxError> {
    raster::load_rgb_f32(path).map_err(|e| RxError::Decode { path: path.display().to_string(), reason: e.to_string() })
}

/// Screens every record in parallel; output follows manifest order.
pub fn run_rx(manifest: &CorpusManifest, cfg: &RxConfig) -> Vec<RxImageOutput> {
    manifest.records.par_iter().map(|r| rx_record(manifest, r, cfg)).collect()
}
