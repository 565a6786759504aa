//! Corpus ingestion: walk a directory of drone photos and videos, sample video
//! frames at a fixed rate, read dimensions/GPS/capture time and emit a
//! [`CorpusManifest`].

mod census;
mod exif;
mod video;

pub use census::{resolution_census, runtime_census, ResolutionCount};
pub use exif::{extract_metadata, ImageMetadata, MetadataError};
pub use video::{frame_count, frame_times, FRAME_CMD_ENV};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 2.0;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsCoord {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Photo,
    VideoFrame,
}

/// One analyzable frame: a still photo or a sampled video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    /// Relative to the manifest root when the file lives under it, absolute otherwise.
    pub source_path: String,
    pub source_kind: SourceKind,
    pub parent_video: Option<String>,
    pub frame_time_s: Option<f64>,
    pub width_px: u32,
    pub height_px: u32,
    pub gps: Option<GpsCoord>,
    pub captured_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub path: String,
    pub duration_s: f64,
    pub native_resolution: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub root: String,
    pub sample_rate_hz: f64,
    pub created_at: DateTime<Utc>,
    pub records: Vec<ImageRecord>,
    #[serde(default)]
    pub videos: Vec<VideoInfo>,
}

impl CorpusManifest {
    pub fn empty(root: impl Into<String>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            root: root.into(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            created_at: Utc::now(),
            records: Vec::new(),
            videos: Vec::new(),
        }
    }

    /// Absolute location of a record's pixels.
    pub fn resolve(&self, record: &ImageRecord) -> PathBuf {
        resolve_under(Path::new(&self.root), &record.source_path)
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn by_id(&self) -> BTreeMap<&str, &ImageRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| IngestError::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| IngestError::Manifest(path.to_path_buf(), e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        fs::write(path, self.to_json() + "\n").map_err(|e| IngestError::Io(path.to_path_buf(), e))
    }
}

pub fn resolve_under(root: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("corpus root {0} is not a readable directory: {1}")]
    Root(PathBuf, std::io::Error),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("invalid manifest {0}: {1}")]
    Manifest(PathBuf, String),
    #[error("invalid sidecar metadata {0}: {1}")]
    Sidecar(PathBuf, String),
    #[error("invalid scan configuration: {0}")]
    Config(String),
}

/// A file (or single frame) left out of the manifest, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub sample_rate_hz: f64,
    pub photo_extensions: Vec<String>,
    pub video_extensions: Vec<String>,
    /// Template such as `ffmpeg -i {input} -vf fps={rate} {outdir}/frame_%06d.png`.
    /// Falls back to the `SARTRIAGE_FRAME_CMD` environment variable.
    pub frame_cmd: Option<String>,
    /// Where command-extracted frames are written. Defaults to `<root>/.sartriage/frames`.
    pub work_dir: Option<PathBuf>,
    /// CSV with `path,lat,lon,captured_at` that supplies or overrides metadata.
    pub sidecar_csv: Option<PathBuf>,
    /// Pin the manifest timestamp (reproducible builds); defaults to now.
    pub created_at: Option<DateTime<Utc>>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            photo_extensions: ["jpg", "jpeg", "png", "tif", "tiff"].map(String::from).to_vec(),
            video_extensions: ["mp4", "mov", "avi", "mkv", "m4v", "ts", "mts"].map(String::from).to_vec(),
            frame_cmd: None,
            work_dir: None,
            sidecar_csv: None,
            created_at: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub manifest: CorpusManifest,
    pub skipped: Vec<Skipped>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
struct SidecarEntry {
    gps: Option<GpsCoord>,
    captured_at: Option<String>,
}

#[derive(Default)]
struct FileOutcome {
    records: Vec<ImageRecord>,
    skipped: Vec<Skipped>,
    warnings: Vec<String>,
    video: Option<VideoInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Photo,
    Video,
}

/// Walks `root` and builds the manifest. Individual unreadable files are
/// skipped and reported; only an unreadable root is fatal.
pub fn scan_corpus(root: &Path, config: &ScanConfig) -> Result<ScanOutcome, IngestError> {
    if !(config.sample_rate_hz.is_finite() && config.sample_rate_hz > 0.0) {
        return Err(IngestError::Config(format!("sample rate must be positive, got {}", config.sample_rate_hz)));
    }
    fs::read_dir(root).map_err(|e| IngestError::Root(root.to_path_buf(), e))?;

    let sidecar = match &config.sidecar_csv {
        Some(p) => load_sidecar(p)?,
        None => BTreeMap::new(),
    };

    let mut files = Vec::new();
    let mut walk_skips = Vec::new();
    let walker = walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !(e.file_type().is_dir() && e.depth() > 0 && is_internal_dir(e.path())));
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e.path().map(|p| p.display().to_string()).unwrap_or_default();
                log::warn!("skipping {path}: {e}");
                walk_skips.push(Skipped { path, reason: e.to_string() });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        if let Some(kind) = classify(entry.path(), config) {
            files.push((entry.into_path(), kind));
        }
    }

    let outcomes: Vec<FileOutcome> = files
        .par_iter()
        .map(|(path, kind)| match kind {
            FileKind::Photo => scan_photo(root, path, &sidecar),
            FileKind::Video => scan_video(root, path, config, &sidecar),
        })
        .collect();

    let mut records = Vec::new();
    let mut videos = Vec::new();
    let mut skipped = walk_skips;
    let mut warnings = Vec::new();
    for o in outcomes {
        records.extend(o.records);
        skipped.extend(o.skipped);
        warnings.extend(o.warnings);
        videos.extend(o.video);
    }
    records.sort_by(|a, b| {
        a.source_path
            .cmp(&b.source_path)
            .then(a.frame_time_s.unwrap_or(-1.0).total_cmp(&b.frame_time_s.unwrap_or(-1.0)))
    });
    videos.sort_by(|a, b| a.path.cmp(&b.path));
    for s in &skipped {
        log::warn!("skipped {}: {}", s.path, s.reason);
    }

    Ok(ScanOutcome {
        manifest: CorpusManifest {
            version: MANIFEST_VERSION,
            root: root.display().to_string(),
            sample_rate_hz: config.sample_rate_hz,
            created_at: config.created_at.unwrap_or_else(Utc::now),
            records,
            videos,
        },
        skipped,
        warnings,
    })
}

fn is_internal_dir(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(video::FRAMES_DIR_SUFFIX) || n == ".sartriage")
}

fn classify(path: &Path, config: &ScanConfig) -> Option<FileKind> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if config.photo_extensions.iter().any(|e| e.eq_ignore_ascii_case(&ext)) {
        Some(FileKind::Photo)
    } else if config.video_extensions.iter().any(|e| e.eq_ignore_ascii_case(&ext)) {
        Some(FileKind::Video)
    } else {
        None
    }
}

/// Root-relative path with `/` separators, or the absolute path for files outside root.
pub(crate) fn rel_path(root: &Path, path: &Path) -> String {
    match path.strip_prefix(root) {
        Ok(rel) => rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
        Err(_) => path.display().to_string(),
    }
}

fn apply_sidecar(record: &mut ImageRecord, sidecar: &BTreeMap<String, SidecarEntry>) {
    let entry = sidecar
        .get(&record.source_path)
        .or_else(|| record.parent_video.as_ref().and_then(|v| sidecar.get(v)));
    if let Some(entry) = entry {
        if entry.gps.is_some() {
            record.gps = entry.gps;
        }
        if entry.captured_at.is_some() {
            record.captured_at = entry.captured_at.clone();
        }
    }
}

fn scan_photo(root: &Path, path: &Path, sidecar: &BTreeMap<String, SidecarEntry>) -> FileOutcome {
    let rel = rel_path(root, path);
    let mut out = FileOutcome::default();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            out.skipped.push(Skipped { path: rel, reason: e.to_string() });
            return out;
        }
    };
    match extract_metadata(&bytes) {
        Ok(meta) => {
            if let Some(w) = &meta.warning {
                log::warn!("{rel}: {w}");
                out.warnings.push(format!("{rel}: {w}"));
            }
            let mut record = ImageRecord {
                id: rel.clone(),
                source_path: rel,
                source_kind: SourceKind::Photo,
                parent_video: None,
                frame_time_s: None,
                width_px: meta.width,
                height_px: meta.height,
                gps: meta.gps,
                captured_at: meta.captured_at,
            };
            apply_sidecar(&mut record, sidecar);
            out.records.push(record);
        }
        Err(e) => out.skipped.push(Skipped { path: rel, reason: e.to_string() }),
    }
    out
}

fn scan_video(
    root: &Path,
    path: &Path,
    config: &ScanConfig,
    sidecar: &BTreeMap<String, SidecarEntry>,
) -> FileOutcome {
    let rel = rel_path(root, path);
    let mut out = FileOutcome::default();
    let source = match video::frame_source(root, path, config) {
        Ok(s) => s,
        Err(reason) => {
            out.skipped.push(Skipped { path: rel, reason });
            return out;
        }
    };

    let mut native = None;
    for (k, t) in frame_times(source.duration_s, config.sample_rate_hz).into_iter().enumerate() {
        let Some(frame_path) = source.frames.get(k) else {
            out.skipped.push(Skipped {
                path: format!("{rel}#t={t:.3}"),
                reason: format!("frame {k} missing from extracted frames ({} available)", source.frames.len()),
            });
            continue;
        };
        let frame_rel = rel_path(root, frame_path);
        let meta = fs::read(frame_path)
            .map_err(|e| e.to_string())
            .and_then(|b| extract_metadata(&b).map_err(|e| e.to_string()));
        match meta {
            Ok(meta) => {
                native.get_or_insert((meta.width, meta.height));
                let mut record = ImageRecord {
                    id: format!("{rel}#t={t:.3}"),
                    source_path: frame_rel,
                    source_kind: SourceKind::VideoFrame,
                    parent_video: Some(rel.clone()),
                    frame_time_s: Some(t),
                    width_px: meta.width,
                    height_px: meta.height,
                    gps: meta.gps,
                    captured_at: meta.captured_at,
                };
                apply_sidecar(&mut record, sidecar);
                out.records.push(record);
            }
            Err(reason) => out.skipped.push(Skipped { path: frame_rel, reason }),
        }
    }
    out.video = Some(VideoInfo { path: rel, duration_s: source.duration_s, native_resolution: native.unwrap_or((0, 0)) });
    out
}

fn load_sidecar(path: &Path) -> Result<BTreeMap<String, SidecarEntry>, IngestError> {
    #[derive(Deserialize)]
    struct Row {
        path: String,
        lat: Option<f64>,
        lon: Option<f64>,
        captured_at: Option<String>,
    }
    let bad = |e: String| IngestError::Sidecar(path.to_path_buf(), e);
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let gps = match (row.lat, row.lon) {
            (Some(lat), Some(lon)) => Some(GpsCoord { lat, lon }),
            _ => None,
        };
        let captured_at = row.captured_at.filter(|s| !s.trim().is_empty());
        out.insert(row.path.replace('\\', "/"), SidecarEntry { gps, captured_at });
    }
    Ok(out)
}
