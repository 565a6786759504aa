//! RX anomaly screening of a green field with one red patch.
//!
//! ```text
//! cargo run --release --example rx_screening
//! ```

use sartriage::geometry::BoundingBox;
use sartriage::ingest::{ImageRecord, SourceKind};
use sartriage::rx::{rx_pipeline, RxConfig};
use sartriage::synth::{green_field, PATCH_RED};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (2048, 1536);
    let mut img = green_field(w, h, 0.02, 7);
    img.fill_rect(1210, 400, 60, 48, PATCH_RED);
    let record = ImageRecord {
        id: "field.png".into(),
        source_path: "field.png".into(),
        source_kind: SourceKind::Photo,
        parent_video: None,
        frame_time_s: None,
        width_px: w,
        height_px: h,
        gps: None,
        captured_at: None,
    };

    let cfg = RxConfig::default();
    let started = std::time::Instant::now();
    let result = rx_pipeline(&record, &img, &cfg)?;
    println!("screened in {:.2?}, candidate = {}", started.elapsed(), result.is_candidate);
    for c in &result.clusters {
        let b: BoundingBox = result.native_bbox(c);
        println!("  cluster of {} px at {:?} (native)", c.pixel_count(), b.to_xywh());
    }
    println!("planted patch: [1210, 400, 60, 48]");
    Ok(())
}
