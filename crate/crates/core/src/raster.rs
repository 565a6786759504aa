//! Float RGB rasters and bilinear resampling.

use image::{Rgb, RgbImage};
use std::path::Path;

/// Interleaved RGB image with channel values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbF32 {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl RgbF32 {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; width as usize * height as usize * 3] }
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<f32>) -> Option<Self> {
        (data.len() == width as usize * height as usize * 3).then_some(Self { width, height, data })
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Self { width: img.width(), height: img.height(), data }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        RgbImage::from_raw(self.width, self.height, raw).expect("buffer size matches dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(3)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, rgb: [f32; 3]) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.put(xx, yy, rgb);
            }
        }
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// Bilinear resize to exactly `dst_w x dst_h`, aspect ratio not preserved.
pub fn resize_bilinear(src: &RgbF32, dst_w: u32, dst_h: u32) -> RgbF32 {
    resize_window(src, dst_w, dst_h, 0, 0, dst_w, dst_h)
}

/// Renders the `out_w x out_h` window at `(x0, y0)` of the virtual image that
/// `resize_bilinear(src, dst_w, dst_h)` would produce, without materializing it.
/// Pixel centers are aligned (half-pixel convention), samples clamp at the border.
pub fn resize_window(
    src: &RgbF32,
    dst_w: u32,
    dst_h: u32,
    x0: u32,
    y0: u32,
    out_w: u32,
    out_h: u32,
) -> RgbF32 {
    assert!(src.width > 0 && src.height > 0, "empty source raster");
    let sx = src.width as f64 / dst_w as f64;
    let sy = src.height as f64 / dst_h as f64;
    let max_x = (src.width - 1) as f64;
    let max_y = (src.height - 1) as f64;

    let taps = |dst: u32, scale: f64, max: f64| {
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
        let i0 = s.floor();
        let frac = (s - i0) as f32;
        let i0 = i0 as usize;
        let i1 = (i0 + 1).min(max as usize);
        (i0, i1, frac)
    };
    let xtaps: Vec<_> = (x0..x0 + out_w).map(|x| taps(x, sx, max_x)).collect();

    let stride = src.width as usize * 3;
    let mut out = RgbF32::new(out_w, out_h);
    for (oy, row) in out.data.chunks_exact_mut(out_w as usize * 3).enumerate() {
        let (y_0, y_1, fy) = taps(y0 + oy as u32, sy, max_y);
        let r0 = &src.data[y_0 * stride..(y_0 + 1) * stride];
        let r1 = &src.data[y_1 * stride..(y_1 + 1) * stride];
        for (px, &(x_0, x_1, fx)) in row.chunks_exact_mut(3).zip(&xtaps) {
            for c in 0..3 {
                let top = r0[x_0 * 3 + c] * (1.0 - fx) + r0[x_1 * 3 + c] * fx;
                let bot = r1[x_0 * 3 + c] * (1.0 - fx) + r1[x_1 * 3 + c] * fx;
                px[c] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

pub fn load_rgb8(path: &Path) -> Result<RgbImage, image::ImageError> {
    Ok(image::ImageReader::open(path)?.with_guessed_format()?.decode()?.to_rgb8())
}

pub fn load_rgb_f32(path: &Path) -> Result<RgbF32, image::ImageError> {
    load_rgb8(path).map(|img| RgbF32::from_rgb8(&img))
}

/// Encodes to PNG in memory.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, image::ImageError> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Draws a one pixel rectangle outline, inclusive of both corner pixels.
pub fn draw_rect_outline(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    if img.width() == 0 || img.height() == 0 {
        return;
    }
    let x1 = x1.min(img.width() - 1);
    let y1 = y1.min(img.height() - 1);
    for x in x0..=x1 {
        img.put_pixel(x, y0, color);
        img.put_pixel(x, y1, color);
    }
    for y in y0..=y1 {
        img.put_pixel(x0, y, color);
        img.put_pixel(x1, y, color);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let src = RgbF32::filled(37, 11, [0.2, 0.4, 0.6]);
        let dst = resize_bilinear(&src, 64, 64);
        assert!(dst.pixels().all(|p| (p[0] - 0.2).abs() < 1e-6 && (p[2] - 0.6).abs() < 1e-6));
    }

    #[test]
    fn identity_resize_is_exact() {
        let mut src = RgbF32::new(5, 4);
        for (i, v) in src.as_mut_slice().iter_mut().enumerate() {
            *v = i as f32 / 60.0;
        }
        assert_eq!(resize_bilinear(&src, 5, 4), src);
    }

    #[test]
    fn window_matches_full_resize() {
        let mut src = RgbF32::new(30, 20);
        for (i, v) in src.as_mut_slice().iter_mut().enumerate() {
            *v = ((i * 7919) % 101) as f32 / 100.0;
        }
        let full = resize_bilinear(&src, 41, 27);
        let win = resize_window(&src, 41, 27, 10, 5, 12, 9);
        for y in 0..9 {
            for x in 0..12 {
                assert_eq!(win.get(x, y), full.get(x + 10, y + 5));
            }
        }
    }
}
