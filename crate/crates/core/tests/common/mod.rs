#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sartriage::eval::GroundTruth;
use sartriage::geometry::BoundingBox;
use sartriage::raster::RgbF32;
use sartriage::synth::{green_field, save_png, PATCH_MAGENTA, PATCH_RED};

/// Heavy tests take this so timings are not skewed by each other.
pub static HEAVY: Mutex<()> = Mutex::new(());

pub fn heavy() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|p| p.into_inner())
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Rectangle `(x, y, w, h)` in whole pixels.
pub type Rect = (u32, u32, u32, u32);

pub struct RxCorpus {
    pub dir: tempfile::TempDir,
    /// Image file name to planted patch, if any.
    pub patches: Vec<(String, Option<Rect>)>,
}

/// Green-field PNGs, some carrying one red patch.
pub fn rx_corpus(n: usize, with_patch: usize, width: u32, height: u32, seed: u64) -> RxCorpus {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flagged: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let j = rng.random_range(i..n);
        flagged.swap(i, j);
    }
    flagged.truncate(with_patch);
    let mut patches = Vec::new();
    for i in 0..n {
        let name = format!("field_{i:03}.png");
        let mut img = green_field(width, height, 0.02, seed.wrapping_mul(1000) + i as u64);
        let patch = flagged.contains(&i).then(|| {
            let w = rng.random_range(44..=90);
            let h = rng.random_range(44..=90);
            let x = rng.random_range(16..width - w - 16);
            let y = rng.random_range(16..height - h - 16);
            img.fill_rect(x, y, w, h, PATCH_RED);
            (x, y, w, h)
        });
        save_png(&img, &dir.path().join(&name)).unwrap();
        patches.push((name, patch));
    }
    RxCorpus { dir, patches }
}

/// One scene with magenta patches on a noisy field.
pub fn magenta_scene(width: u32, height: u32, patches: &[Rect], seed: u64) -> RgbF32 {
    let mut img = green_field(width, height, 0.02, seed);
    for &(x, y, w, h) in patches {
        img.fill_rect(x, y, w, h, PATCH_MAGENTA);
    }
    img
}

pub struct DetectCorpus {
    pub dir: tempfile::TempDir,
    pub gt: GroundTruth,
}

/// PNG scenes whose magenta patches straddle 512px tile seams, plus the
/// matching ground truth keyed by file name.
pub fn detect_corpus(n: usize, seed: u64) -> DetectCorpus {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gt = GroundTruth::new();
    for i in 0..n {
        let (w, h) = (1300, 1100);
        let mut rects = Vec::new();
        // one across the vertical seam, one across the horizontal seam, one at the crossing
        rects.push((rng.random_range(480..500), rng.random_range(100..300), rng.random_range(40..60), 30));
        rects.push((rng.random_range(100..300), rng.random_range(490..500), 25, rng.random_range(30..50)));
        rects.push((rng.random_range(1000..1010), rng.random_range(500..508), 30, 30));
        if i % 2 == 0 {
            rects.push((rng.random_range(700..900), rng.random_range(800..900), 20, 20));
        }
        let img = magenta_scene(w, h, &rects, seed + i as u64);
        let name = format!("scene_{i:02}.png");
        save_png(&img, &dir.path().join(&name)).unwrap();
        gt.insert(
            name,
            rects.iter().map(|&(x, y, w, h)| BoundingBox::image(x as f64, y as f64, w as f64, h as f64)).collect(),
        );
    }
    DetectCorpus { dir, gt }
}

/// Files under `root`, relative path to bytes, sorted.
pub fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().into_owned();
            (rel, std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// JSON document with the named keys removed at any depth.
pub fn strip_keys(v: &mut serde_json::Value, keys: &[&str]) {
    match v {
        serde_json::Value::Object(m) => {
            for k in keys {
                m.remove(*k);
            }
            for child in m.values_mut() {
                strip_keys(child, keys);
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(|c| strip_keys(c, keys)),
        _ => {}
    }
}

pub fn run_cli(args: &[&str]) -> i32 {
    let mut argv = vec!["sartriage"];
    argv.extend_from_slice(args);
    sartriage::cli::run(argv)
}
