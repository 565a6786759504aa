use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::Utc;
use image::{GenericImageView, Rgb};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    CandidateRecord, CandidateSource, CandidateStatus, ReviewVerdict, TriageError, VerdictRequest, DEFAULT_PAGE_SIZE,
    MAX_PAGE_SIZE,
};
use crate::ingest::resolve_under;
use crate::raster::{draw_rect_outline, encode_png};

pub const LOG_FILE: &str = "verdicts.log";
pub const SNAPSHOT_FILE: &str = "candidates.snapshot.json";
const SNAPSHOT_EVERY: usize = 64;
pub const OUTLINE_COLOR: [u8; 3] = [255, 255, 0];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListFilter {
    pub status: Option<CandidateStatus>,
    pub source: Option<CandidateSource>,
    /// 1-based.
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub items: Vec<CandidateRecord>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub total_pages: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub total: usize,
    pub by_status: BTreeMap<CandidateStatus, usize>,
    pub by_source: BTreeMap<CandidateSource, usize>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    candidates: Vec<CandidateRecord>,
}

/// Parses the complete lines of a verdict log. Returns the verdicts and the
/// byte length of the complete prefix; anything after the last newline is a
/// torn write.
pub fn replay_log(bytes: &[u8]) -> (Vec<ReviewVerdict>, usize) {
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let verdicts = bytes[..complete]
        .split(|&b| b == b'\n')
        .filter(|l| !l.iter().all(u8::is_ascii_whitespace))
        .filter_map(|l| match serde_json::from_slice::<ReviewVerdict>(l) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("ignoring unreadable verdict line: {e}");
                None
            }
        })
        .collect();
    (verdicts, complete)
}

struct Writer {
    log: File,
    since_snapshot: usize,
}

/// File-backed candidate store. Reads share a lock; every write goes
/// through one appender.
pub struct TriageStore {
    dir: PathBuf,
    images_root: PathBuf,
    state: RwLock<BTreeMap<String, CandidateRecord>>,
    writer: Mutex<Writer>,
}

fn io_err(p: &Path) -> impl FnOnce(std::io::Error) -> TriageError + '_ {
    move |e| TriageError::Io(p.display().to_string(), e)
}

impl TriageStore {
    /// Opens or creates a store, dropping a torn final log line and
    /// recomputing every status from the log.
    pub fn open(dir: &Path, images_root: &Path) -> Result<Self, TriageError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut candidates: BTreeMap<String, CandidateRecord> = match std::fs::read(&snap_path) {
            Ok(bytes) => {
                let snap: Snapshot = serde_json::from_slice(&bytes)
                    .map_err(|e| TriageError::Corrupt(format!("{}: {e}", snap_path.display())))?;
                snap.candidates.into_iter().map(|c| (c.candidate_id.clone(), c)).collect()
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(io_err(&snap_path)(e)),
        };
        for c in candidates.values_mut() {
            c.status = CandidateStatus::Pending;
        }

        let log_path = dir.join(LOG_FILE);
        let bytes = match std::fs::read(&log_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&log_path)(e)),
        };
        let (verdicts, complete) = replay_log(&bytes);
        let log = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
        if complete < bytes.len() {
            log::warn!("discarding {} bytes of torn verdict log tail", bytes.len() - complete);
            log.set_len(complete as u64).map_err(io_err(&log_path))?;
            log.sync_all().map_err(io_err(&log_path))?;
        }
        for v in verdicts {
            match candidates.get_mut(&v.candidate_id) {
                Some(c) => c.status = v.decision.into(),
                None => log::warn!("verdict for unknown candidate {}", v.candidate_id),
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            images_root: images_root.to_path_buf(),
            state: RwLock::new(candidates),
            writer: Mutex::new(Writer { log, since_snapshot: 0 }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, CandidateRecord>> {
        self.state.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write_snapshot(&self, candidates: &BTreeMap<String, CandidateRecord>) -> Result<(), TriageError> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let snap = Snapshot { version: 1, candidates: candidates.values().cloned().collect() };
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&serde_json::to_vec_pretty(&snap).expect("snapshot serializes")).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Adds candidates not already present. Returns how many were new.
    pub fn ingest(&self, incoming: Vec<CandidateRecord>) -> Result<usize, TriageError> {
        let _w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut state = self.state.write().unwrap_or_else(|p| p.into_inner());
        let mut added = 0;
        for c in incoming {
            if !state.contains_key(&c.candidate_id) {
                state.insert(c.candidate_id.clone(), CandidateRecord { status: CandidateStatus::Pending, ..c });
                added += 1;
            }
        }
        if added > 0 || !self.dir.join(SNAPSHOT_FILE).exists() {
            self.write_snapshot(&state)?;
        }
        Ok(added)
    }

    pub fn get(&self, id: &str) -> Result<CandidateRecord, TriageError> {
        self.read().get(id).cloned().ok_or_else(|| TriageError::NotFound(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn list(&self, filter: &ListFilter) -> Result<Page, TriageError> {
        let page = filter.page.unwrap_or(1);
        let page_size = filter.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
        if page == 0 {
            return Err(TriageError::BadRequest("page numbers start at 1".into()));
        }
        if page_size == 0 || page_size > MAX_PAGE_SIZE {
            return Err(TriageError::BadRequest(format!("page_size must be in 1..={MAX_PAGE_SIZE}")));
        }
        let mut matching: Vec<CandidateRecord> = self
            .read()
            .values()
            .filter(|c| filter.status.is_none_or(|s| c.status == s))
            .filter(|c| filter.source.is_none_or(|s| c.source == s))
            .cloned()
            .collect();
        matching.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.candidate_id.cmp(&b.candidate_id)));
        let total = matching.len();
        let items = matching.into_iter().skip((page - 1).saturating_mul(page_size)).take(page_size).collect();
        Ok(Page { items, page, page_size, total, total_pages: total.div_ceil(page_size) })
    }

    /// Appends a verdict and applies it. Verdicts are serialized; the last
    /// one appended wins.
    pub fn record_verdict(&self, id: &str, req: VerdictRequest) -> Result<CandidateRecord, TriageError> {
        self.append_verdict(ReviewVerdict {
            candidate_id: id.to_string(),
            decision: req.decision,
            reviewer: req.reviewer,
            notes: req.notes,
            decided_at: Utc::now(),
        })
    }

    pub fn append_verdict(&self, verdict: ReviewVerdict) -> Result<CandidateRecord, TriageError> {
        let mut w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        if !self.read().contains_key(&verdict.candidate_id) {
            return Err(TriageError::NotFound(verdict.candidate_id));
        }
        let log_path = self.dir.join(LOG_FILE);
        let mut line = serde_json::to_vec(&verdict).expect("verdict serializes");
        line.push(b'\n');
        w.log.write_all(&line).map_err(io_err(&log_path))?;
        w.log.sync_data().map_err(io_err(&log_path))?;

        let mut state = self.state.write().unwrap_or_else(|p| p.into_inner());
        let rec = state.get_mut(&verdict.candidate_id).expect("checked above");
        rec.status = verdict.decision.into();
        let updated = rec.clone();
        w.since_snapshot += 1;
        if w.since_snapshot >= SNAPSHOT_EVERY {
            w.since_snapshot = 0;
            self.write_snapshot(&state)?;
        }
        Ok(updated)
    }

    /// Every complete verdict in log order.
    pub fn verdicts(&self) -> Result<Vec<ReviewVerdict>, TriageError> {
        let _w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.dir.join(LOG_FILE);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        Ok(replay_log(&bytes).0)
    }

    pub fn statuses(&self) -> BTreeMap<String, CandidateStatus> {
        self.read().iter().map(|(k, v)| (k.clone(), v.status)).collect()
    }

    pub fn stats(&self) -> Stats {
        let state = self.read();
        let mut by_status: BTreeMap<CandidateStatus, usize> = [
            CandidateStatus::Pending,
            CandidateStatus::Dismissed,
            CandidateStatus::Elevated,
            CandidateStatus::Unsure,
        ]
        .into_iter()
        .map(|s| (s, 0))
        .collect();
        let mut by_source: BTreeMap<CandidateSource, usize> =
            [(CandidateSource::Rx, 0), (CandidateSource::Detect, 0)].into_iter().collect();
        for c in state.values() {
            *by_status.entry(c.status).or_default() += 1;
            *by_source.entry(c.source).or_default() += 1;
        }
        Stats { total: state.len(), by_status, by_source }
    }

    pub fn source_file(&self, rec: &CandidateRecord) -> PathBuf {
        resolve_under(&self.images_root, &rec.source_path)
    }

    /// PNG of the region grown by `context` pixels per side, clamped to the
    /// image, with the region outlined.
    pub fn crop_png(&self, id: &str, context: u32) -> Result<Vec<u8>, TriageError> {
        let rec = self.get(id)?;
        let path = self.source_file(&rec);
        if !path.is_file() {
            return Err(TriageError::SourceGone(id.to_string(), path.display().to_string()));
        }
        let img = crate::raster::load_rgb8(&path).map_err(|e| TriageError::Decode(e.to_string()))?;
        let (w, h) = img.dimensions();
        let r = rec.region.clamp_to(w as f64, h as f64).ok_or_else(|| {
            TriageError::Corrupt(format!("region of {id} lies outside its {w}x{h} image"))
        })?;
        let (rx0, ry0) = (r.x.floor() as u32, r.y.floor() as u32);
        let (rx1, ry1) = ((r.x1().ceil() as u32).max(rx0 + 1).min(w), (r.y1().ceil() as u32).max(ry0 + 1).min(h));
        let x0 = rx0.saturating_sub(context);
        let y0 = ry0.saturating_sub(context);
        let x1 = rx1.saturating_add(context).min(w);
        let y1 = ry1.saturating_add(context).min(h);
        let mut crop = img.view(x0, y0, x1 - x0, y1 - y0).to_image();
        draw_rect_outline(&mut crop, rx0 - x0, ry0 - y0, rx1 - 1 - x0, ry1 - 1 - y0, Rgb(OUTLINE_COLOR));
        encode_png(&crop).map_err(|e| TriageError::Decode(e.to_string()))
    }

    /// GeoJSON FeatureCollection of elevated candidates with GPS; elevated
    /// candidates without GPS go in `no_location`.
    pub fn export_elevated(&self) -> Value {
        let state = self.read();
        let mut elevated: Vec<&CandidateRecord> =
            state.values().filter(|c| c.status == CandidateStatus::Elevated).collect();
        elevated.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.candidate_id.cmp(&b.candidate_id)));
        let mut features = Vec::new();
        let mut no_location = Vec::new();
        for c in elevated {
            let props = json!({
                "candidate_id": c.candidate_id,
                "image_id": c.image_id,
                "source": c.source,
                "score": c.score,
                "region": c.region.to_xywh(),
            });
            match c.gps {
                Some(g) => features.push(json!({
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [g.lon, g.lat]},
                    "properties": props,
                })),
                None => no_location.push(props),
            }
        }
        json!({"type": "FeatureCollection", "features": features, "no_location": no_location})
    }
}
