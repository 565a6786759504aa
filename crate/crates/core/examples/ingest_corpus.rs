//! Scan a folder of stills and a pre-extracted clip into a manifest.
//!
//! ```text
//! cargo run --example ingest_corpus [ROOT]
//! ```
//! Without ROOT a small synthetic corpus is generated in a temp dir.

use std::path::PathBuf;

use sartriage::ingest::{resolution_census, runtime_census, scan_corpus, ScanConfig};
use sartriage::synth::{green_field, save_png};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let root = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            for i in 0..3 {
                save_png(&green_field(640, 480, 0.02, i), &tmp.path().join(format!("photo_{i}.png")))?;
            }
            std::fs::write(tmp.path().join("pass1.mp4"), b"")?;
            let frames = tmp.path().join("pass1.mp4.frames");
            for k in 0..7 {
                save_png(&green_field(320, 240, 0.02, 100 + k), &frames.join(format!("frame_{k:06}.png")))?;
            }
            std::fs::write(frames.join("duration.txt"), "3.0")?;
            tmp.path().to_path_buf()
        }
    };

    let out = scan_corpus(&root, &ScanConfig::default())?;
    let m = &out.manifest;
    println!("{} records, {} videos, {} skipped", m.records.len(), m.videos.len(), out.skipped.len());
    for r in m.records.iter().take(8) {
        println!("  {:<28} {:>5}x{:<5} {:?}", r.id, r.width_px, r.height_px, r.gps);
    }
    for c in resolution_census(m) {
        println!("resolution {}x{}: {}", c.width, c.height, c.count);
    }
    for (bin, n) in runtime_census(&m.videos, 60.0) {
        println!("runtime bin {bin}: {n}");
    }
    for s in &out.skipped {
        println!("skipped {}: {}", s.path, s.reason);
    }
    Ok(())
}
