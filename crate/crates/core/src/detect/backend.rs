//! Detector backends: the built-in magenta-blob detector used for tests and
//! demos, and a subprocess adapter speaking the stdio protocol.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use image::RgbImage;
use rayon::prelude::*;

use super::protocol::{self, RawBox, TileRequest};
use super::{DetectError, TileRect};

/// One tile handed to a backend.
pub struct TileInput<'a> {
    pub tile_id: String,
    pub rect: TileRect,
    pub pixels: &'a RgbImage,
}

/// Anything that turns tiles into boxes. Results are returned in input order.
pub trait DetectorBackend: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, tiles: &[TileInput<'_>]) -> Result<Vec<Vec<RawBox>>, DetectError>;
}

pub const MAGENTA: [u8; 3] = [255, 0, 255];

/// Finds 8-connected components of pure magenta pixels; each becomes a box
/// with score 1.0.
#[derive(Debug, Clone, Default)]
pub struct SyntheticBackend;

impl SyntheticBackend {
    pub fn detect_tile(pixels: &RgbImage) -> Vec<RawBox> {
        let (w, h) = pixels.dimensions();
        let mut seen = vec![false; (w * h) as usize];
        let is_target = |x: u32, y: u32| pixels.get_pixel(x, y).0 == MAGENTA;
        let mut boxes = Vec::new();
        let mut stack = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if seen[i] || !is_target(x, y) {
                    continue;
                }
                seen[i] = true;
                stack.push((x, y));
                let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
                while let Some((cx, cy)) = stack.pop() {
                    x0 = x0.min(cx);
                    y0 = y0.min(cy);
                    x1 = x1.max(cx);
                    y1 = y1.max(cy);
                    for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                        for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                            let j = (ny * w + nx) as usize;
                            if !seen[j] && is_target(nx, ny) {
                                seen[j] = true;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
                boxes.push(RawBox {
                    x: x0 as f64,
                    y: y0 as f64,
                    w: (x1 - x0 + 1) as f64,
                    h: (y1 - y0 + 1) as f64,
                    score: 1.0,
                    label: protocol::default_label(),
                });
            }
        }
        boxes
    }
}

impl DetectorBackend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn detect(&self, tiles: &[TileInput<'_>]) -> Result<Vec<Vec<RawBox>>, DetectError> {
        Ok(tiles.par_iter().map(|t| Self::detect_tile(t.pixels)).collect())
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    capacity: usize,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Failure {
    /// The adapter crashed, hung or closed its pipes: worth one restart.
    Transport(String),
    Protocol(protocol::ProtocolError),
}

/// Runs an external adapter process. The process is started lazily, kept
/// alive across images, and treated as non-reentrant: requests from
/// concurrent images are serialized, and at most `capacity` requests (from
/// the handshake) are in flight at once.
pub struct SubprocessBackend {
    command: Vec<String>,
    work_dir: PathBuf,
    timeout: Duration,
    session: Mutex<Option<Session>>,
    seq: AtomicU64,
}

impl SubprocessBackend {
    pub fn new(command: Vec<String>, work_dir: PathBuf, timeout: Duration) -> Result<Self, DetectError> {
        if command.is_empty() {
            return Err(DetectError::Backend("empty adapter command".into()));
        }
        std::fs::create_dir_all(&work_dir)
            .map_err(|e| DetectError::Backend(format!("creating {}: {e}", work_dir.display())))?;
        Ok(Self { command, work_dir, timeout, session: Mutex::new(None), seq: AtomicU64::new(0) })
    }

    fn spawn(&self) -> Result<Session, Failure> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Failure::Transport(format!("spawning {:?}: {e}", self.command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut session = Session { child, stdin, lines: rx, capacity: 1 };
        let line = Self::recv(&session, self.timeout)?;
        let hs = protocol::parse_handshake(&line).map_err(Failure::Protocol)?;
        session.capacity = hs.capacity;
        Ok(session)
    }

    fn recv(session: &Session, timeout: Duration) -> Result<String, Failure> {
        match session.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Failure::Transport(format!("reading adapter output: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Failure::Transport(format!("adapter timed out after {timeout:?}"))),
            Err(RecvTimeoutError::Disconnected) => Err(Failure::Transport("adapter closed its output".into())),
        }
    }

    fn exchange(&self, session: &mut Session, requests: &[(TileRequest, usize)], out: &mut [Vec<RawBox>]) -> Result<(), Failure> {
        for window in requests.chunks(session.capacity.max(1)) {
            for (req, _) in window {
                session
                    .stdin
                    .write_all(protocol::encode_line(req).as_bytes())
                    .and_then(|_| session.stdin.flush())
                    .map_err(|e| Failure::Transport(format!("writing request: {e}")))?;
            }
            for _ in window {
                let line = Self::recv(session, self.timeout)?;
                let resp = protocol::parse_response(&line).map_err(Failure::Protocol)?;
                let Some((_, slot)) = window.iter().find(|(r, _)| r.tile_id == resp.tile_id) else {
                    return Err(Failure::Protocol(protocol::ProtocolError::Malformed {
                        line,
                        reason: "response for a tile that was not requested".into(),
                    }));
                };
                if let Some(err) = &resp.error {
                    log::warn!("adapter could not process tile {}: {err}", resp.tile_id);
                }
                out[*slot] = resp.boxes;
            }
        }
        Ok(())
    }
}

impl DetectorBackend for SubprocessBackend {
    fn name(&self) -> &str {
        "subprocess"
    }

    fn detect(&self, tiles: &[TileInput<'_>]) -> Result<Vec<Vec<RawBox>>, DetectError> {
        let mut written = Vec::with_capacity(tiles.len());
        let mut requests = Vec::with_capacity(tiles.len());
        for (slot, t) in tiles.iter().enumerate() {
            let path = self.work_dir.join(format!("tile_{:08}.png", self.seq.fetch_add(1, Ordering::Relaxed)));
            t.pixels.save(&path).map_err(|e| DetectError::Backend(format!("writing {}: {e}", path.display())))?;
            requests.push((TileRequest { tile_id: t.tile_id.clone(), image_path: path.display().to_string() }, slot));
            written.push(path);
        }

        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let mut result = Err(DetectError::Backend("adapter never ran".into()));
        for attempt in 0..2 {
            let mut out = vec![Vec::new(); tiles.len()];
            let outcome = match guard.take() {
                Some(s) => Ok(s),
                None => self.spawn(),
            }
            .and_then(|mut s| {
                let r = self.exchange(&mut s, &requests, &mut out);
                if r.is_ok() {
                    *guard = Some(s);
                }
                r
            });
            match outcome {
                Ok(()) => {
                    result = Ok(out);
                    break;
                }
                Err(Failure::Protocol(e)) => {
                    result = Err(DetectError::Protocol(e));
                    break;
                }
                Err(Failure::Transport(msg)) => {
                    log::warn!("adapter failure (attempt {}): {msg}", attempt + 1);
                    result = Err(DetectError::Backend(msg));
                }
            }
        }
        drop(guard);
        for p in written {
            let _ = std::fs::remove_file(p);
        }
        result
    }
}
