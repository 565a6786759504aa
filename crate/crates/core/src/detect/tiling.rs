use image::RgbImage;
use serde::{Deserialize, Serialize};

/// A square tile placed inside the (possibly padded) image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileRect {
    pub index: usize,
    pub x: u32,
    pub y: u32,
    pub size: u32,
}

fn axis_offsets(extent: u32, tile: u32, overlap: u32) -> Vec<u32> {
    if extent <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut out = Vec::new();
    let mut pos = 0;
    loop {
        if pos + tile >= extent {
            // last tile shifted back so it ends exactly on the edge
            let last = extent - tile;
            if out.last() != Some(&last) {
                out.push(last);
            }
            return out;
        }
        out.push(pos);
        pos += stride;
    }
}

/// Row-major tiles of side `tile_size` advancing by `tile_size - overlap`, with the
/// final row/column shifted inward so every tile lies inside the image. Images
/// smaller than a tile get one tile at the origin (the caller pads).
pub fn tile_grid(width: u32, height: u32, tile_size: u32, overlap: u32) -> Vec<TileRect> {
    assert!(tile_size > 0 && overlap < tile_size, "overlap must be smaller than the tile");
    let xs = axis_offsets(width, tile_size, overlap);
    let ys = axis_offsets(height, tile_size, overlap);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            tiles.push(TileRect { index: tiles.len(), x, y, size: tile_size });
        }
    }
    tiles
}

/// Pads to at least `min_w x min_h` by replicating the last row/column.
pub fn pad_replicate(image: &RgbImage, min_w: u32, min_h: u32) -> RgbImage {
    let (w, h) = image.dimensions();
    if w >= min_w && h >= min_h {
        return image.clone();
    }
    let (pw, ph) = (w.max(min_w), h.max(min_h));
    RgbImage::from_fn(pw, ph, |x, y| *image.get_pixel(x.min(w - 1), y.min(h - 1)))
}

pub fn crop_tile(image: &RgbImage, tile: &TileRect) -> RgbImage {
    image::imageops::crop_imm(image, tile.x, tile.y, tile.size, tile.size).to_image()
}
