//! Axis-aligned pixel rectangles shared by every stage.

use serde::{Deserialize, Serialize};

/// Which coordinate system a box is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Tile,
    #[default]
    Image,
}

/// Top-left anchored rectangle in pixel units. `w` and `h` are strictly positive
/// for any box produced by this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default)]
    pub frame: Frame,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, frame: Frame) -> Self {
        Self { x, y, w, h, frame }
    }

    pub fn image(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, w, h, Frame::Image)
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64, frame: Frame) -> Self {
        Self::new(x0, y0, x1 - x0, y1 - y0, frame)
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    /// Signed extents of the intersection along each axis. Negative means a gap.
    pub fn intersection_extents(&self, other: &BoundingBox) -> (f64, f64) {
        let iw = self.x1().min(other.x1()) - self.x.max(other.x);
        let ih = self.y1().min(other.y1()) - self.y.max(other.y);
        (iw, ih)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let (iw, ih) = self.intersection_extents(other);
        iw.max(0.0) * ih.max(0.0)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter <= 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.x1() <= self.x1() && other.y1() <= self.y1()
    }

    /// Smallest box enclosing both.
    pub fn union_hull(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox::from_corners(
            self.x.min(other.x),
            self.y.min(other.y),
            self.x1().max(other.x1()),
            self.y1().max(other.y1()),
            self.frame,
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox { x: self.x + dx, y: self.y + dy, ..*self }
    }

    /// Intersect with `[0, width] x [0, height]`. `None` when nothing is left.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.x1().min(width);
        let y1 = self.y1().min(height);
        if x1 > x0 && y1 > y0 {
            Some(BoundingBox::from_corners(x0, y0, x1, y1, self.frame))
        } else {
            None
        }
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_xywh(v: [f64; 4], frame: Frame) -> Self {
        Self::new(v[0], v[1], v[2], v[3], frame)
    }
}

/// Free-function form used by the evaluation code.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identical_is_one() {
        let a = BoundingBox::image(3.0, 4.0, 10.0, 7.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = BoundingBox::image(0.0, 0.0, 10.0, 10.0);
        let b = BoundingBox::image(20.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_shift() {
        // intersection 5x10 = 50, union 100 + 100 - 50 = 150
        let a = BoundingBox::image(0.0, 0.0, 10.0, 10.0);
        let b = BoundingBox::image(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn clamp_trims_overhang() {
        let b = BoundingBox::image(95.0, 10.0, 8.0, 5.0);
        let c = b.clamp_to(100.0, 100.0).unwrap();
        assert_eq!(c.w, 5.0);
        assert!(BoundingBox::image(120.0, 0.0, 5.0, 5.0).clamp_to(100.0, 100.0).is_none());
    }
}
