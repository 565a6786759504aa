//! Training-data preparation: a seeded train/val split, 512px crops that
//! favour ground-truth boxes half of the time, and box-aware augmentation.

mod augment;
mod crop;

pub use augment::{
    apply_symmetry, augment, denormalize, flip_box, flip_pixels, normalize, rotate90_box, rotate90_pixels,
    AugmentConfig, Flip, NoExtraEffects, PhotometricStage, NORMALIZE_MEANS, NORMALIZE_STDS,
};
pub use crop::{
    crop_boxes, plan_crop, render_crop, sample_crop, CropPlan, CropSample, CropSkip, Provenance, DEFAULT_CROP_SIZE,
    MIN_RETAINED_AREA, RESIZE_RANGE,
};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::GroundTruth;
use crate::raster::{encode_png, load_rgb_f32};

pub const DEFAULT_VAL_FRACTION: f64 = 0.10;

#[derive(Debug, thiserror::Error)]
pub enum PrepError {
    #[error("need at least two images to split, got {0}")]
    TooFewImages(usize),
    #[error("validation fraction must be in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Shuffles ids with `seed` and takes `round(fraction * n)` of them for
/// validation. Both halves come back sorted.
pub fn split_train_val(ids: &[String], val_fraction: f64, seed: u64) -> Result<Split, PrepError> {
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(PrepError::BadFraction(val_fraction));
    }
    let mut unique: Vec<String> = ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() < 2 {
        return Err(PrepError::TooFewImages(unique.len()));
    }
    let n_val = (val_fraction * unique.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unique.shuffle(&mut rng);
    let mut val = unique.split_off(unique.len() - n_val);
    unique.sort();
    val.sort();
    Ok(Split { train: unique, val })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub crop_size: u32,
    pub val_fraction: f64,
    pub samples_per_image: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            crop_size: DEFAULT_CROP_SIZE,
            val_fraction: DEFAULT_VAL_FRACTION,
            samples_per_image: 4,
            seed: 0,
            augment: AugmentConfig::default(),
        }
    }
}

/// Sidecar written next to each crop PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSidecar {
    pub boxes: Vec<[f64; 4]>,
    pub source_image_id: String,
    pub resize_factor: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepSkip {
    pub image_id: String,
    pub sample: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepSummary {
    pub train_images: usize,
    pub val_images: usize,
    pub written: usize,
    pub skipped: Vec<PrepSkip>,
}

/// RNG for one sample: stream `index` of `seed`, independent of scheduling.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn find_image(images_dir: &Path, image_id: &str) -> Option<PathBuf> {
    let direct = images_dir.join(image_id);
    if direct.is_file() {
        return Some(direct);
    }
    ["png", "jpg", "jpeg", "tif", "tiff"]
        .iter()
        .map(|ext| images_dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

fn sample_name(image_id: &str, k: usize) -> String {
    let safe: String = image_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{safe}_{k:03}")
}

fn write_sample(dir: &Path, name: &str, sample: &CropSample) -> Result<(), PrepError> {
    let io = |p: &Path, e| PrepError::Io(p.display().to_string(), e);
    let png_path = dir.join(format!("{name}.png"));
    let png = encode_png(&sample.pixels.to_rgb8())
        .map_err(|e| io(&png_path, std::io::Error::other(e)))?;
    std::fs::write(&png_path, png).map_err(|e| io(&png_path, e))?;
    let sidecar = CropSidecar {
        boxes: sample.boxes.iter().map(|b| b.to_xywh()).collect(),
        source_image_id: sample.source_image_id.clone(),
        resize_factor: sample.resize_factor,
        provenance: sample.provenance,
    };
    let json_path = dir.join(format!("{name}.json"));
    std::fs::write(&json_path, serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes"))
        .map_err(|e| io(&json_path, e))
}

/// Splits the annotated images, then writes `samples_per_image` augmented
/// crops per image to `out/crops/{train,val}/`. Sample `k` of the `i`-th image
/// in sorted id order always uses RNG stream `i * samples_per_image + k`.
pub fn prepare_training_set(
    gt: &GroundTruth,
    images_dir: &Path,
    out: &Path,
    cfg: &PrepConfig,
    extra: &dyn PhotometricStage,
) -> Result<PrepSummary, PrepError> {
    let ids: Vec<String> = gt.keys().cloned().collect();
    let split = split_train_val(&ids, cfg.val_fraction, cfg.seed)?;
    let index_of = |id: &str| ids.binary_search_by(|p| p.as_str().cmp(id)).expect("id from ground truth");

    let mut summary = PrepSummary { train_images: split.train.len(), val_images: split.val.len(), ..Default::default() };
    for (name, members) in [("train", &split.train), ("val", &split.val)] {
        let dir = out.join("crops").join(name);
        std::fs::create_dir_all(&dir).map_err(|e| PrepError::Io(dir.display().to_string(), e))?;
        let results: Vec<Result<(usize, Vec<PrepSkip>), PrepError>> = members
            .par_iter()
            .map(|id| {
                let skip = |sample, reason: String| PrepSkip { image_id: id.clone(), sample, reason };
                let Some(path) = find_image(images_dir, id) else {
                    return Ok((0, vec![skip(None, "image file not found".into())]));
                };
                let image = match load_rgb_f32(&path) {
                    Ok(img) => img,
                    Err(e) => return Ok((0, vec![skip(None, format!("decode failed: {e}"))])),
                };
                let boxes = &gt[id];
                let base = (index_of(id) * cfg.samples_per_image) as u64;
                let (mut written, mut skipped) = (0, Vec::new());
                for k in 0..cfg.samples_per_image {
                    let mut rng = sample_rng(cfg.seed, base + k as u64);
                    match sample_crop(&image, boxes, id, cfg.crop_size, &mut rng) {
                        Ok(crop) => {
                            let aug = augment(&crop, &cfg.augment, extra, &mut rng);
                            write_sample(&dir, &sample_name(id, k), &aug)?;
                            written += 1;
                        }
                        Err(e) => skipped.push(skip(Some(k), e.to_string())),
                    }
                }
                Ok((written, skipped))
            })
            .collect();
        for r in results {
            let (w, s) = r?;
            summary.written += w;
            summary.skipped.extend(s);
        }
    }
    for s in &summary.skipped {
        log::warn!("skipped {} sample {:?}: {}", s.image_id, s.sample, s.reason);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img{i:03}")).collect()
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let all = ids(57);
        let s = split_train_val(&all, 0.1, 7).unwrap();
        assert_eq!(s.val.len(), 6);
        assert_eq!(s.train.len() + s.val.len(), 57);
        assert!(s.val.iter().all(|v| !s.train.contains(v)));
        assert_eq!(split_train_val(&all, 0.1, 7).unwrap(), s);
        assert_ne!(split_train_val(&all, 0.1, 8).unwrap(), s);
    }

    #[test]
    fn split_needs_two_images() {
        assert!(matches!(split_train_val(&ids(1), 0.1, 0), Err(PrepError::TooFewImages(1))));
    }

    #[test]
    fn sample_streams_differ() {
        use rand::Rng;
        let a: u64 = sample_rng(1, 0).random();
        let b: u64 = sample_rng(1, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, sample_rng(1, 0).random::<u64>());
    }
}
