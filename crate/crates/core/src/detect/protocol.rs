//! Line-delimited JSON protocol spoken with external detector adapters.
//!
//! The adapter first prints a handshake `{"protocol":1,"capacity":N}`. The
//! orchestrator then writes one request per tile,
//! `{"tile_id":..,"image_path":..}`, pointing at a PNG crop, and the adapter
//! answers each with `{"tile_id":..,"boxes":[{"x","y","w","h","score","label"}]}`.
//! UTF-8, one object per line, flushed after every response.

use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: u32,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRequest {
    pub tile_id: String,
    pub image_path: String,
}

/// A box as reported by a detector, in tile pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    #[serde(default = "default_label")]
    pub label: String,
}

pub(crate) fn default_label() -> String {
    "person".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileResponse {
    pub tile_id: String,
    pub boxes: Vec<RawBox>,
    /// Set by adapters that could not process the tile; `boxes` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed adapter line {line:?}: {reason}")]
    Malformed { line: String, reason: String },
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("adapter box violates the contract in line {line:?}: {reason}")]
    InvalidBox { line: String, reason: String },
}

impl RawBox {
    pub fn check(&self) -> Result<(), String> {
        let finite = [self.x, self.y, self.w, self.h, self.score].iter().all(|v| v.is_finite());
        if !finite {
            return Err("non-finite coordinate or score".into());
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(format!("non-positive size {}x{}", self.w, self.h));
        }
        Ok(())
    }
}

pub fn parse_handshake(line: &str) -> Result<Handshake, ProtocolError> {
    let hs: Handshake = serde_json::from_str(line.trim())
        .map_err(|e| ProtocolError::Malformed { line: line.to_string(), reason: e.to_string() })?;
    if hs.protocol != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(hs.protocol));
    }
    if hs.capacity == 0 {
        return Err(ProtocolError::Malformed { line: line.to_string(), reason: "capacity must be at least 1".into() });
    }
    Ok(hs)
}

/// Parses and validates one response line.
pub fn parse_response(line: &str) -> Result<TileResponse, ProtocolError> {
    let resp: TileResponse = serde_json::from_str(line.trim())
        .map_err(|e| ProtocolError::Malformed { line: line.to_string(), reason: e.to_string() })?;
    for b in &resp.boxes {
        b.check().map_err(|reason| ProtocolError::InvalidBox { line: line.to_string(), reason })?;
    }
    Ok(resp)
}

pub fn encode_line<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("protocol messages serialize");
    s.push('\n');
    s
}

/// Adapter side of the protocol: handshake, then one response per request
/// line in order until EOF. Tiles that cannot be read yield an `error` response.
pub fn serve_adapter<R, W, F>(input: R, mut output: W, capacity: usize, mut detect: F) -> io::Result<usize>
where
    R: BufRead,
    W: Write,
    F: FnMut(&image::RgbImage) -> Vec<RawBox>,
{
    output.write_all(encode_line(&Handshake { protocol: PROTOCOL_VERSION, capacity }).as_bytes())?;
    output.flush()?;
    let mut served = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<TileRequest>(&line) {
            Ok(req) => match crate::raster::load_rgb8(Path::new(&req.image_path)) {
                Ok(img) => TileResponse { tile_id: req.tile_id, boxes: detect(&img), error: None },
                Err(e) => TileResponse { tile_id: req.tile_id, boxes: vec![], error: Some(e.to_string()) },
            },
            Err(e) => TileResponse { tile_id: String::new(), boxes: vec![], error: Some(format!("bad request: {e}")) },
        };
        output.write_all(encode_line(&response).as_bytes())?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handshake_round_trip() {
        let hs = parse_handshake(r#"{"protocol":1,"capacity":4}"#).unwrap();
        assert_eq!(hs.capacity, 4);
        assert_eq!(parse_handshake(r#"{"protocol":2,"capacity":1}"#), Err(ProtocolError::Version(2)));
    }

    #[test]
    fn score_above_one_is_rejected() {
        let line = r#"{"tile_id":"t0","boxes":[{"x":1,"y":1,"w":3,"h":3,"score":1.7,"label":"person"}]}"#;
        match parse_response(line) {
            Err(ProtocolError::InvalidBox { line: l, .. }) => assert_eq!(l, line),
            other => panic!("expected InvalidBox, got {other:?}"),
        }
    }

    #[test]
    fn garbage_names_the_line() {
        let err = parse_response("{not json").unwrap_err();
        assert!(err.to_string().contains("{not json"));
    }

    #[test]
    fn label_defaults_to_person() {
        let r = parse_response(r#"{"tile_id":"a","boxes":[{"x":0,"y":0,"w":1,"h":1,"score":0.5}]}"#).unwrap();
        assert_eq!(r.boxes[0].label, "person");
    }

    #[test]
    fn adapter_reports_unreadable_tiles() {
        let input = b"{\"tile_id\":\"x\",\"image_path\":\"/nonexistent/tile.png\"}\n";
        let mut out = Vec::new();
        serve_adapter(&input[..], &mut out, 1, |_| vec![]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(parse_handshake(lines.next().unwrap()).unwrap().capacity, 1);
        let resp = parse_response(lines.next().unwrap()).unwrap();
        assert_eq!(resp.tile_id, "x");
        assert!(resp.boxes.is_empty() && resp.error.is_some());
    }
}
