mod common;

use std::path::{Path, PathBuf};
use std::time::Duration;

use common::*;
use sartriage::detect::protocol::{parse_handshake, parse_response, serve_adapter, ProtocolError, RawBox};
use sartriage::detect::{detect_pipeline, DetectConfig, DetectError, SubprocessBackend, SyntheticBackend};
use sartriage::synth::save_png;

const BIN: &str = env!("CARGO_BIN_EXE_sartriage");

#[test]
fn golden_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let tile = dir.path().join("t0.png");
    save_png(&magenta_scene(64, 48, &[(10, 5, 8, 12), (40, 30, 6, 6)], 1), &tile).unwrap();
    let input = format!(
        "{}\n\n{}\nthis is not json\n",
        serde_json::json!({"tile_id": "a/0", "image_path": tile}),
        serde_json::json!({"tile_id": "a/1", "image_path": dir.path().join("missing.png")}),
    );
    let mut out = Vec::new();
    let served = serve_adapter(input.as_bytes(), &mut out, 3, SyntheticBackend::detect_tile).unwrap();
    assert_eq!(served, 3);
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], r#"{"protocol":1,"capacity":3}"#);
    assert_eq!(
        lines[1],
        r#"{"tile_id":"a/0","boxes":[{"x":10.0,"y":5.0,"w":8.0,"h":12.0,"score":1.0,"label":"person"},{"x":40.0,"y":30.0,"w":6.0,"h":6.0,"score":1.0,"label":"person"}]}"#
    );
    let missing = parse_response(lines[2]).unwrap();
    assert_eq!(missing.tile_id, "a/1");
    assert!(missing.boxes.is_empty() && missing.error.is_some());
    let bad = parse_response(lines[3]).unwrap();
    assert!(bad.error.unwrap().starts_with("bad request"));
}

#[test]
fn handshake_parser() {
    assert_eq!(parse_handshake(r#"{"protocol":1,"capacity":4}"#).unwrap().capacity, 4);
    assert_eq!(parse_handshake("  {\"capacity\":1,\"protocol\":1}\n").unwrap().capacity, 1);
    assert_eq!(parse_handshake(r#"{"protocol":2,"capacity":4}"#), Err(ProtocolError::Version(2)));
    assert!(matches!(parse_handshake(r#"{"protocol":1,"capacity":0}"#), Err(ProtocolError::Malformed { .. })));
    assert!(matches!(parse_handshake(r#"{"protocol":1}"#), Err(ProtocolError::Malformed { .. })));
    assert!(matches!(parse_handshake("ready"), Err(ProtocolError::Malformed { .. })));
}

#[test]
fn response_parser() {
    let ok = parse_response(r#"{"tile_id":"x","boxes":[{"x":1,"y":2,"w":3,"h":4,"score":0.5}]}"#).unwrap();
    assert_eq!(ok.boxes, vec![RawBox { x: 1.0, y: 2.0, w: 3.0, h: 4.0, score: 0.5, label: "person".into() }]);
    for bad in [
        r#"{"tile_id":"x","boxes":[{"x":1,"y":2,"w":3,"h":4,"score":1.5}]}"#,
        r#"{"tile_id":"x","boxes":[{"x":1,"y":2,"w":0,"h":4,"score":0.5}]}"#,
        r#"{"tile_id":"x","boxes":[{"x":1,"y":2,"w":3,"h":-4,"score":0.5}]}"#,
    ] {
        assert!(matches!(parse_response(bad), Err(ProtocolError::InvalidBox { .. })), "{bad}");
    }
    assert!(matches!(parse_response(r#"{"tile_id":"x"}"#), Err(ProtocolError::Malformed { .. })));
    assert!(matches!(parse_response(r#"{"tile_id":"x","boxes":[{"x":1}]}"#), Err(ProtocolError::Malformed { .. })));
}

fn scene() -> (image::RgbImage, Vec<Rect>) {
    let rects = vec![(500, 60, 40, 30), (100, 505, 20, 30), (880, 700, 25, 25)];
    (magenta_scene(1000, 800, &rects, 3).to_rgb8(), rects)
}

fn backend(cmd: Vec<String>, work: &Path, timeout_s: f64) -> SubprocessBackend {
    SubprocessBackend::new(cmd, work.to_path_buf(), Duration::from_secs_f64(timeout_s)).unwrap()
}

fn script(dir: &Path, name: &str, body: &str) -> Vec<String> {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}")).unwrap();
    vec!["sh".into(), path.display().to_string()]
}

fn spawn_count(marker: &PathBuf) -> usize {
    std::fs::read_to_string(marker).map(|s| s.lines().count()).unwrap_or(0)
}

#[test]
fn subprocess_adapter_matches_in_process_backend() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = scene();
    let cfg = DetectConfig::default();
    let want = detect_pipeline("s", &img, &cfg, &SyntheticBackend).unwrap();
    for capacity in ["1", "4"] {
        let b = backend(vec![BIN.into(), "adapter".into(), "--capacity".into(), capacity.into()], dir.path(), 30.0);
        let got = detect_pipeline("s", &img, &cfg, &b).unwrap();
        assert_eq!(got.detections, want.detections);
        // the process is reused across images
        let again = detect_pipeline("s", &img, &cfg, &b).unwrap();
        assert_eq!(again.detections, want.detections);
    }
    // tile files are cleaned up
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[cfg(unix)]
#[test]
fn adapter_crash_is_retried_once() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("spawns");
    // the first run dies after the handshake; later runs are the real adapter
    let cmd = script(
        dir.path(),
        "flaky.sh",
        &format!(
            "echo x >> {m}\nif [ $(wc -l < {m}) -eq 1 ]; then echo '{{\"protocol\":1,\"capacity\":1}}'; read line; exit 3; fi\nexec {BIN} adapter\n",
            m = marker.display()
        ),
    );
    let work = dir.path().join("work");
    let (img, rects) = scene();
    let got = detect_pipeline("s", &img, &DetectConfig::default(), &backend(cmd, &work, 30.0)).unwrap();
    assert_eq!(got.detections.len(), rects.len());
    assert_eq!(spawn_count(&marker), 2);
}

#[cfg(unix)]
#[test]
fn adapter_that_keeps_crashing_fails_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("spawns");
    let cmd = script(dir.path(), "dead.sh", &format!("echo x >> {}\nexit 1\n", marker.display()));
    let (img, _) = scene();
    let err = detect_pipeline("s", &img, &DetectConfig::default(), &backend(cmd, &dir.path().join("w"), 30.0)).unwrap_err();
    assert!(matches!(err, DetectError::Backend(_)), "{err}");
    assert_eq!(spawn_count(&marker), 2);
}

#[cfg(unix)]
#[test]
fn malformed_output_is_a_protocol_error_without_retry() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("spawns");
    let cmd = script(
        dir.path(),
        "chatty.sh",
        &format!(
            "echo x >> {}\necho '{{\"protocol\":1,\"capacity\":1}}'\nwhile read line; do echo 'loading weights...'; done\n",
            marker.display()
        ),
    );
    let (img, _) = scene();
    let err = detect_pipeline("s", &img, &DetectConfig::default(), &backend(cmd, &dir.path().join("w"), 30.0)).unwrap_err();
    assert!(matches!(err, DetectError::Protocol(ProtocolError::Malformed { .. })), "{err}");
    assert_eq!(spawn_count(&marker), 1);
}

#[cfg(unix)]
#[test]
fn wrong_protocol_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "v2.sh", "echo '{\"protocol\":2,\"capacity\":1}'\ncat > /dev/null\n");
    let (img, _) = scene();
    let err = detect_pipeline("s", &img, &DetectConfig::default(), &backend(cmd, &dir.path().join("w"), 30.0)).unwrap_err();
    assert!(matches!(err, DetectError::Protocol(ProtocolError::Version(2))), "{err}");
}

#[cfg(unix)]
#[test]
fn hung_adapter_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "hang.sh", "echo '{\"protocol\":1,\"capacity\":1}'\nexec sleep 30\n");
    let (img, _) = scene();
    let started = std::time::Instant::now();
    let err = detect_pipeline("s", &img, &DetectConfig::default(), &backend(cmd, &dir.path().join("w"), 0.3)).unwrap_err();
    assert!(matches!(err, DetectError::Backend(ref m) if m.contains("timed out")), "{err}");
    assert!(started.elapsed() < Duration::from_secs(10));
}

#[test]
fn cli_detect_through_the_adapter_matches_synthetic() {
    let corpus = detect_corpus(2, 8);
    let out = tempfile::tempdir().unwrap();
    let manifest = out.path().join("m.json");
    let m = |p: &str| out.path().join(p).display().to_string();
    assert_eq!(run_cli(&["ingest", "--root", corpus.dir.path().to_str().unwrap(), "--out", &manifest.display().to_string()]), 0);
    assert_eq!(run_cli(&["detect", "--manifest", &m("m.json"), "--out", &m("syn.jsonl"), "--backend", "synthetic"]), 0);
    let cmd = format!("{BIN} adapter --capacity 2");
    assert_eq!(run_cli(&["detect", "--manifest", &m("m.json"), "--out", &m("sub.jsonl"), "--adapter-cmd", &cmd]), 0);
    assert_eq!(std::fs::read(m("syn.jsonl")).unwrap(), std::fs::read(m("sub.jsonl")).unwrap());
}
