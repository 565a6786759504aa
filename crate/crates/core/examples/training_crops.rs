//! Write augmented 512 px training crops with box sidecars.
//!
//! ```text
//! cargo run --release --example training_crops [OUT_DIR]
//! ```

use std::path::PathBuf;

use sartriage::eval::GroundTruth;
use sartriage::geometry::BoundingBox;
use sartriage::synth::{green_field, save_png, PATCH_MAGENTA};
use sartriage::trainprep::{prepare_training_set, NoExtraEffects, PrepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let images = tempfile::tempdir()?;
    let keep = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| keep.path().to_path_buf());

    let mut gt = GroundTruth::new();
    for i in 0..10u32 {
        let mut img = green_field(1280, 960, 0.02, i as u64);
        let (x, y) = (200 + 70 * i, 150 + 50 * i);
        img.fill_rect(x, y, 24, 48, PATCH_MAGENTA);
        let name = format!("img_{i:02}.png");
        save_png(&img, &images.path().join(&name))?;
        gt.insert(name, vec![BoundingBox::image(x as f64, y as f64, 24.0, 48.0)]);
    }

    let cfg = PrepConfig { seed: 2024, samples_per_image: 3, ..PrepConfig::default() };
    let summary = prepare_training_set(&gt, images.path(), &out, &cfg, &NoExtraEffects)?;
    println!(
        "{} train / {} val images, {} crops written, {} skipped, in {}",
        summary.train_images,
        summary.val_images,
        summary.written,
        summary.skipped.len(),
        out.join("crops").display()
    );
    let mut sidecars: Vec<PathBuf> = std::fs::read_dir(out.join("crops/train"))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    sidecars.sort();
    for p in sidecars {
        let text = std::fs::read_to_string(&p)?;
        if !text.contains("\"boxes\": []") {
            println!("{}:\n{text}", p.display());
            break;
        }
    }
    Ok(())
}
