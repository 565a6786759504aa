//! Synthetic aerial-like scenes: a noisy green field with painted patches.
//! Used by the examples and tests.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::raster::{encode_png, RgbF32};

pub const FIELD_GREEN: [f32; 3] = [0.22, 0.50, 0.16];
pub const PATCH_RED: [f32; 3] = [0.90, 0.10, 0.10];
pub const PATCH_MAGENTA: [f32; 3] = [1.0, 0.0, 1.0];

/// `FIELD_GREEN` plus independent per-channel Gaussian noise.
pub fn green_field(width: u32, height: u32, noise_sigma: f32, seed: u64) -> RgbF32 {
    let mut img = RgbF32::filled(width, height, FIELD_GREEN);
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, noise_sigma).expect("finite sigma");
        for v in img.as_mut_slice() {
            *v += normal.sample(&mut rng);
        }
        img.clamp_unit();
    }
    img
}

pub fn save_png(img: &RgbF32, path: &Path) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let bytes = encode_png(&img.to_rgb8()).map_err(std::io::Error::other)?;
    std::fs::write(path, bytes)
}
