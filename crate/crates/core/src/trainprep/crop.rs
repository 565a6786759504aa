use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Frame};
use crate::raster::{resize_window, RgbF32};

pub const DEFAULT_CROP_SIZE: u32 = 512;
pub const RESIZE_RANGE: (f64, f64) = (0.7, 1.1);
/// Clipped boxes keeping less than this fraction of their area are dropped.
pub const MIN_RETAINED_AREA: f64 = 0.25;
const MAX_RESIZE_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RandomCrop,
    BoxGuidedCrop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropSample {
    /// `crop_size x crop_size`, values in `[0, 1]`.
    pub pixels: RgbF32,
    /// Crop coordinates.
    pub boxes: Vec<BoundingBox>,
    pub source_image_id: String,
    pub resize_factor: f64,
    pub provenance: Provenance,
}

/// Where a crop comes from, decided before any pixels are touched.
#[derive(Debug, Clone, PartialEq)]
pub struct CropPlan {
    pub resize_factor: f64,
    pub resized_size: (u32, u32),
    pub origin: (u32, u32),
    pub crop_size: u32,
    pub provenance: Provenance,
    /// Index of the box a guided crop was built around.
    pub selected_box: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CropSkip {
    #[error("image {width}x{height} is smaller than the {crop}px crop after resizing by {factor:.3}")]
    TooSmall { width: u32, height: u32, crop: u32, factor: f64 },
    #[error("selected box does not fit in a {crop}px crop after {attempts} resize attempts")]
    BoxTooLarge { crop: u32, attempts: usize },
}

fn scaled(b: &BoundingBox, fx: f64, fy: f64) -> BoundingBox {
    BoundingBox::new(b.x * fx, b.y * fy, b.w * fx, b.h * fy, Frame::Image)
}

/// Range of crop origins along one axis that keep `[lo, hi)` fully inside.
fn containing_origins(lo: f64, hi: f64, crop: u32, extent: u32) -> Option<(u32, u32)> {
    let first = (hi.ceil() - crop as f64).max(0.0) as u32;
    let last = (lo.floor().max(0.0) as u32).min(extent - crop);
    (first <= last).then_some((first, last))
}

/// Draws the resize factor, the crop branch and the crop origin.
///
/// Without boxes the crop is uniform. With boxes, a fair coin picks between a
/// uniform crop and a crop built around a uniformly chosen box, placed
/// uniformly among the origins that contain it. When the chosen box cannot fit,
/// only the resize factor is redrawn.
pub fn plan_crop<R: Rng + ?Sized>(
    width: u32,
    height: u32,
    boxes: &[BoundingBox],
    crop_size: u32,
    rng: &mut R,
) -> Result<CropPlan, CropSkip> {
    let mut factor = rng.random_range(RESIZE_RANGE.0..=RESIZE_RANGE.1);
    let guided = !boxes.is_empty() && rng.random_bool(0.5);
    let selected = guided.then(|| rng.random_range(0..boxes.len()));

    for attempt in 1..=MAX_RESIZE_ATTEMPTS {
        let rw = (width as f64 * factor).round() as u32;
        let rh = (height as f64 * factor).round() as u32;
        if rw < crop_size || rh < crop_size {
            return Err(CropSkip::TooSmall { width: rw, height: rh, crop: crop_size, factor });
        }
        let (fx, fy) = (rw as f64 / width as f64, rh as f64 / height as f64);
        match selected {
            None => {
                let x = rng.random_range(0..=rw - crop_size);
                let y = rng.random_range(0..=rh - crop_size);
                return Ok(CropPlan {
                    resize_factor: factor,
                    resized_size: (rw, rh),
                    origin: (x, y),
                    crop_size,
                    provenance: Provenance::RandomCrop,
                    selected_box: None,
                });
            }
            Some(k) => {
                let b = scaled(&boxes[k], fx, fy);
                let xs = containing_origins(b.x, b.x1(), crop_size, rw);
                let ys = containing_origins(b.y, b.y1(), crop_size, rh);
                if let (Some((x0, x1)), Some((y0, y1))) = (xs, ys) {
                    return Ok(CropPlan {
                        resize_factor: factor,
                        resized_size: (rw, rh),
                        origin: (rng.random_range(x0..=x1), rng.random_range(y0..=y1)),
                        crop_size,
                        provenance: Provenance::BoxGuidedCrop,
                        selected_box: Some(k),
                    });
                }
                if attempt < MAX_RESIZE_ATTEMPTS {
                    factor = rng.random_range(RESIZE_RANGE.0..=RESIZE_RANGE.1);
                }
            }
        }
    }
    Err(CropSkip::BoxTooLarge { crop: crop_size, attempts: MAX_RESIZE_ATTEMPTS })
}

/// Boxes of the source image expressed in the crop, clipped, minus slivers.
pub fn crop_boxes(boxes: &[BoundingBox], plan: &CropPlan, width: u32, height: u32) -> Vec<BoundingBox> {
    let (rw, rh) = plan.resized_size;
    let (fx, fy) = (rw as f64 / width as f64, rh as f64 / height as f64);
    let (ox, oy) = (plan.origin.0 as f64, plan.origin.1 as f64);
    let side = plan.crop_size as f64;
    boxes
        .iter()
        .filter_map(|b| {
            let s = scaled(b, fx, fy).translate(-ox, -oy);
            let clipped = s.clamp_to(side, side)?;
            (clipped.area() >= MIN_RETAINED_AREA * s.area())
                .then_some(BoundingBox { frame: Frame::Tile, ..clipped })
        })
        .collect()
}

pub fn render_crop(image: &RgbF32, boxes: &[BoundingBox], plan: &CropPlan, image_id: &str) -> CropSample {
    let (rw, rh) = plan.resized_size;
    let pixels = resize_window(image, rw, rh, plan.origin.0, plan.origin.1, plan.crop_size, plan.crop_size);
    CropSample {
        pixels,
        boxes: crop_boxes(boxes, plan, image.width(), image.height()),
        source_image_id: image_id.to_string(),
        resize_factor: plan.resize_factor,
        provenance: plan.provenance,
    }
}

/// Rescale, pick a crop, and cut it out.
pub fn sample_crop<R: Rng + ?Sized>(
    image: &RgbF32,
    boxes: &[BoundingBox],
    image_id: &str,
    crop_size: u32,
    rng: &mut R,
) -> Result<CropSample, CropSkip> {
    let plan = plan_crop(image.width(), image.height(), boxes, crop_size, rng)?;
    Ok(render_crop(image, boxes, &plan, image_id))
}
