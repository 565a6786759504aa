//! Geometric and photometric augmentation of crop samples.
//!
//! Flips and quarter-turn rotations move boxes with the pixels; everything
//! photometric leaves boxes alone. Emboss/snow/fog/sepia style effects are
//! not built in; plug them in through [`PhotometricStage`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CropSample;
use crate::geometry::BoundingBox;
use crate::raster::RgbF32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    /// Allowed counter-clockwise quarter turns, drawn uniformly.
    pub rotate_quarter_turns: Vec<u8>,
    /// Standard deviation of additive per-channel noise on the `[0, 1]` scale.
    pub gaussian_noise_sigma: f64,
    pub brightness_contrast_prob: f64,
    pub color_jitter_prob: f64,
    pub normalize_means: [f32; 3],
    pub normalize_stds: [f32; 3],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            rotate_quarter_turns: vec![0, 1, 2, 3],
            gaussian_noise_sigma: 0.01,
            brightness_contrast_prob: 0.5,
            color_jitter_prob: 0.5,
            normalize_means: NORMALIZE_MEANS,
            normalize_stds: NORMALIZE_STDS,
        }
    }
}

pub const NORMALIZE_MEANS: [f32; 3] = [0.485, 0.456, 0.406];
pub const NORMALIZE_STDS: [f32; 3] = [0.229, 0.224, 0.225];

/// Extra photometric effect applied after the geometric steps.
pub trait PhotometricStage: Send + Sync {
    fn apply(&self, pixels: &mut RgbF32, rng: &mut dyn rand::RngCore);
}

/// Default stage: does nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoExtraEffects;

impl PhotometricStage for NoExtraEffects {
    fn apply(&self, _pixels: &mut RgbF32, _rng: &mut dyn rand::RngCore) {}
}

/// One of the eight symmetries of the square: optional mirror, then turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flip {
    None,
    Horizontal,
    Vertical,
}

fn remap<F: Fn(u32, u32) -> (u32, u32)>(src: &RgbF32, out_w: u32, out_h: u32, to_src: F) -> RgbF32 {
    let mut out = RgbF32::new(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = to_src(x, y);
            out.put(x, y, src.get(sx, sy));
        }
    }
    out
}

pub fn flip_pixels(img: &RgbF32, flip: Flip) -> RgbF32 {
    let (w, h) = (img.width(), img.height());
    match flip {
        Flip::None => img.clone(),
        Flip::Horizontal => remap(img, w, h, |x, y| (w - 1 - x, y)),
        Flip::Vertical => remap(img, w, h, |x, y| (x, h - 1 - y)),
    }
}

pub fn flip_box(b: &BoundingBox, flip: Flip, width: f64, height: f64) -> BoundingBox {
    match flip {
        Flip::None => *b,
        Flip::Horizontal => BoundingBox { x: width - b.x - b.w, ..*b },
        Flip::Vertical => BoundingBox { y: height - b.y - b.h, ..*b },
    }
}

/// One counter-clockwise quarter turn: source pixel `(x, y)` lands on `(y, W-1-x)`.
pub fn rotate90_pixels(img: &RgbF32) -> RgbF32 {
    let (w, h) = (img.width(), img.height());
    // output is h wide and w tall
    remap(img, h, w, |x, y| (w - 1 - y, x))
}

/// Box counterpart of [`rotate90_pixels`] for an image `width` wide.
pub fn rotate90_box(b: &BoundingBox, width: f64) -> BoundingBox {
    BoundingBox { x: b.y, y: width - b.x - b.w, w: b.h, h: b.w, frame: b.frame }
}

/// Applies a mirror followed by `turns` quarter turns to pixels and boxes.
pub fn apply_symmetry(sample: &CropSample, flip: Flip, turns: u8) -> CropSample {
    let (w, h) = (sample.pixels.width() as f64, sample.pixels.height() as f64);
    let mut pixels = flip_pixels(&sample.pixels, flip);
    let mut boxes: Vec<BoundingBox> = sample.boxes.iter().map(|b| flip_box(b, flip, w, h)).collect();
    let mut cur_w = w;
    let mut cur_h = h;
    for _ in 0..turns % 4 {
        pixels = rotate90_pixels(&pixels);
        boxes = boxes.iter().map(|b| rotate90_box(b, cur_w)).collect();
        std::mem::swap(&mut cur_w, &mut cur_h);
    }
    CropSample { pixels, boxes, ..sample.clone() }
}

fn add_noise<R: Rng + ?Sized>(img: &mut RgbF32, sigma: f64, rng: &mut R) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0f32, sigma as f32).expect("finite sigma");
    for v in img.as_mut_slice() {
        *v += normal.sample(rng);
    }
}

/// `alpha * v + beta` with `alpha ~ U[0.8, 1.2]`, `beta ~ U[-0.2, 0.2]`.
fn brightness_contrast<R: Rng + ?Sized>(img: &mut RgbF32, rng: &mut R) {
    let alpha = rng.random_range(0.8f32..=1.2);
    let beta = rng.random_range(-0.2f32..=0.2);
    for v in img.as_mut_slice() {
        *v = alpha * *v + beta;
    }
}

/// Saturation and brightness jitter around each pixel's luma:
/// `b * (luma + s * (v - luma))` with `s, b ~ U[0.8, 1.2]`.
fn color_jitter<R: Rng + ?Sized>(img: &mut RgbF32, rng: &mut R) {
    let s = rng.random_range(0.8f32..=1.2);
    let b = rng.random_range(0.8f32..=1.2);
    for px in img.as_mut_slice().chunks_exact_mut(3) {
        let luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        for v in px.iter_mut() {
            *v = b * (luma + s * (*v - luma));
        }
    }
}

pub fn augment<R: Rng>(
    sample: &CropSample,
    cfg: &AugmentConfig,
    extra: &dyn PhotometricStage,
    rng: &mut R,
) -> CropSample {
    let flip = if rng.random_bool(cfg.flip_prob.clamp(0.0, 1.0)) {
        if rng.random_bool(0.5) {
            Flip::Horizontal
        } else {
            Flip::Vertical
        }
    } else {
        Flip::None
    };
    let turns = match cfg.rotate_quarter_turns.len() {
        0 => 0,
        n => cfg.rotate_quarter_turns[rng.random_range(0..n)],
    };
    let mut out = apply_symmetry(sample, flip, turns);

    extra.apply(&mut out.pixels, rng);
    add_noise(&mut out.pixels, cfg.gaussian_noise_sigma, rng);
    // exactly one of the two photometric options is considered per sample
    if rng.random_bool(0.5) {
        if rng.random_bool(cfg.brightness_contrast_prob.clamp(0.0, 1.0)) {
            brightness_contrast(&mut out.pixels, rng);
        }
    } else if rng.random_bool(cfg.color_jitter_prob.clamp(0.0, 1.0)) {
        color_jitter(&mut out.pixels, rng);
    }
    out.pixels.clamp_unit();
    out
}

/// Per-channel standardization `(v - mean) / std`.
pub fn normalize(pixels: &RgbF32, means: [f32; 3], stds: [f32; 3]) -> Vec<f32> {
    pixels
        .as_slice()
        .chunks_exact(3)
        .flat_map(|px| (0..3).map(move |c| (px[c] - means[c]) / stds[c]))
        .collect()
}

pub fn denormalize(values: &[f32], width: u32, height: u32, means: [f32; 3], stds: [f32; 3]) -> Option<RgbF32> {
    let data = values.chunks_exact(3).flat_map(|px| (0..3).map(move |c| px[c] * stds[c] + means[c])).collect();
    RgbF32::from_raw(width, height, data)
}
