//! Load candidates into a triage store and serve the review API.
//!
//! ```text
//! cargo run --example review_server            # one scripted round trip, then exit
//! cargo run --example review_server -- --keep  # keep serving on 127.0.0.1:8080
//! ```

use std::sync::Arc;

use sartriage::detect::{DetectionOut, DetectionsLine};
use sartriage::ingest::{CorpusManifest, GpsCoord, ImageRecord, SourceKind};
use sartriage::synth::{green_field, save_png, PATCH_MAGENTA};
use sartriage::triage::{build_candidates, serve, TriageStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let keep = std::env::args().any(|a| a == "--keep");
    let images = tempfile::tempdir()?;
    let store_dir = tempfile::tempdir()?;

    let mut manifest = CorpusManifest::empty(images.path().display().to_string());
    let mut lines = Vec::new();
    for i in 0..4u32 {
        let name = format!("pass_{i}.png");
        let mut img = green_field(800, 600, 0.02, i as u64);
        img.fill_rect(300 + 20 * i, 200, 20, 40, PATCH_MAGENTA);
        save_png(&img, &images.path().join(&name))?;
        manifest.records.push(ImageRecord {
            id: name.clone(),
            source_path: name.clone(),
            source_kind: SourceKind::Photo,
            parent_video: None,
            frame_time_s: None,
            width_px: 800,
            height_px: 600,
            gps: Some(GpsCoord { lat: 46.55 + i as f64 * 1e-4, lon: 8.56 }),
            captured_at: None,
        });
        lines.push(DetectionsLine {
            image_id: name,
            detections: vec![DetectionOut {
                x: (300 + 20 * i) as f64,
                y: 200.0,
                w: 20.0,
                h: 40.0,
                score: 0.8,
                label: "person".into(),
                contributors: 1,
            }],
            error: None,
        });
    }
    let (candidates, _) = build_candidates(&[], &lines, &manifest, chrono::Utc::now());
    let store = Arc::new(TriageStore::open(store_dir.path(), images.path())?);
    println!("{} candidates ingested", store.ingest(candidates)?);

    let rt = tokio::runtime::Runtime::new()?;
    let bind = if keep { "127.0.0.1:8080" } else { "127.0.0.1:0" }.parse()?;
    let (tx, rx) = tokio::sync::oneshot::channel();
    rt.spawn(serve(store.clone(), bind, Some(tx)));
    let addr = rt.block_on(rx)?;
    println!("serving on http://{addr}/api/candidates");
    if keep {
        rt.block_on(std::future::pending::<()>());
    }

    let base = format!("http://{addr}/api");
    let page: serde_json::Value = ureq::get(&format!("{base}/candidates?page_size=2")).call()?.body_mut().read_json()?;
    let id = page["items"][0]["candidate_id"].as_str().unwrap_or_default().to_string();
    println!("page 1 of {}: first candidate {id}", page["total_pages"]);
    let png = ureq::get(&format!("{base}/candidates/{id}/crop?context=64")).call()?.body_mut().read_to_vec()?;
    println!("crop: {} bytes of PNG", png.len());
    ureq::post(&format!("{base}/candidates/{id}/verdict"))
        .send_json(serde_json::json!({"decision": "elevated", "reviewer": "team-a", "notes": "red jacket"}))?;
    let geo: serde_json::Value = ureq::get(&format!("{base}/export/elevated")).call()?.body_mut().read_json()?;
    println!("export: {}", serde_json::to_string_pretty(&geo)?);
    let stats: serde_json::Value = ureq::get(&format!("{base}/stats")).call()?.body_mut().read_json()?;
    println!("stats: {stats}");
    Ok(())
}
