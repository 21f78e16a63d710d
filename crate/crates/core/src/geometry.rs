//! Axis-aligned boxes and overlap measures.
//!
//! Boxes use the MOT exchange convention: top-left corner plus width and
//! height, in pixels. Corner form is only used internally.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box field `{field}` is not finite ({value})")]
    NonFinite { field: &'static str, value: f64 },
    #[error("box has negative extent: w={w}, h={h}")]
    NegativeExtent { w: f64, h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Checked constructor. Zero-area boxes are valid.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        for (field, value) in [("x", x), ("y", y), ("w", w), ("h", h)] {
            if !value.is_finite() {
                return Err(GeometryError::NonFinite { field, value });
            }
        }
        if w < 0.0 || h < 0.0 {
            return Err(GeometryError::NegativeExtent { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        Self::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.x, self.y, self.w, self.h).is_ok()
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Intersection with `other`, or `None` when they do not overlap with
    /// positive area.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let (x, w) = overlap_span(self.x, self.w, other.x, other.w);
        let (y, h) = overlap_span(self.y, self.h, other.y, other.h);
        (w > 0.0 && h > 0.0).then_some(Self { x, y, w, h })
    }

    /// Smallest box containing both.
    pub fn enclosing(&self, other: &Self) -> Self {
        let (x, w) = hull_span(self.x, self.w, other.x, other.w);
        let (y, h) = hull_span(self.y, self.h, other.y, other.h);
        Self { x, y, w, h }
    }

    /// Clip to the rectangle `[0, width] x [0, height]`. A box entirely
    /// outside collapses to zero extent on the nearest edge.
    pub fn clip_to(&self, width: f64, height: f64) -> Self {
        let x1 = self.x.clamp(0.0, width);
        let y1 = self.y.clamp(0.0, height);
        let x2 = self.right().clamp(0.0, width);
        let y2 = self.bottom().clamp(0.0, height);
        Self {
            x: x1,
            y: y1,
            w: (x2 - x1).max(0.0),
            h: (y2 - y1).max(0.0),
        }
    }
}

/// Overlap of `[a, a + aw]` and `[b, b + bw]` as `(start, length)`. A
/// contained interval keeps its own length so identical boxes overlap
/// exactly.
fn overlap_span(a: f64, aw: f64, b: f64, bw: f64) -> (f64, f64) {
    let start = a.max(b);
    let (a_end, b_end) = (a + aw, b + bw);
    let len = if a >= b && a_end <= b_end {
        aw
    } else if b >= a && b_end <= a_end {
        bw
    } else {
        a_end.min(b_end) - start
    };
    (start, len)
}

fn hull_span(a: f64, aw: f64, b: f64, bw: f64) -> (f64, f64) {
    let start = a.min(b);
    let (a_end, b_end) = (a + aw, b + bw);
    let len = if a <= b && a_end >= b_end {
        aw
    } else if b <= a && b_end >= a_end {
        bw
    } else {
        a_end.max(b_end) - start
    };
    (start, len)
}

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.intersection(b).map_or(0.0, |i| i.area())
}

/// Intersection over union. Zero when the union has no area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Generalized IOU: `iou - |C \ (a ∪ b)| / |C|` with `C` the enclosing box.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    let hull = a.enclosing(b).area();
    let overlap = if union > 0.0 { inter / union } else { 0.0 };
    if hull <= 0.0 {
        return overlap;
    }
    let empty = ((hull - union) / hull).max(0.0);
    (overlap - empty).clamp(-1.0, 1.0)
}
