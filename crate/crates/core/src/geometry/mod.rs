//! Coordinate-level primitives shared by every stage of the pipeline.
//!
//! Coordinates are continuous pixel units with the origin at the top-left
//! corner of the grid, `x` to the right and `y` downward. Pixel `(row, col)`
//! covers `[col, col + 1) x [row, row + 1)` and its center is at
//! `(col + 0.5, row + 0.5)`.

mod contour;
mod mask;
mod polygon;
mod rect;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contour::trace_outline;
pub use mask::{mask_iou, PixelMask};
pub use polygon::{
    is_simple, point_in_polygon, polygon_distance, rasterize_polygon, segment_distance, Polygon,
    Winding,
};
pub use rect::{convex_hull, min_area_rect, RotatedRect};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("grid dimensions must be positive, got {height}x{width}")]
    EmptyGrid { height: usize, width: usize },
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A point in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(&self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Point2) -> Point2 {
        Point2::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn midpoint(self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// Wraps an undirected angle into `[0, pi)`.
pub fn canonical_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly PI for tiny negative inputs
    if t >= PI {
        t = 0.0;
    }
    t
}

/// One element of a snake: center, radius (half the local text height) and
/// the undirected tangent orientation of the center line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point2,
    pub radius: f64,
    pub theta: f64,
}

impl Disk {
    /// Builds a disk with `theta` wrapped into `[0, pi)` and a negative
    /// radius clamped to zero.
    pub fn new(center: Point2, radius: f64, theta: f64) -> Self {
        Self {
            center,
            radius: radius.max(0.0),
            theta: canonical_angle(theta),
        }
    }
}

/// Direction of the total-least-squares line through `points`, in `[0, pi)`.
pub fn fit_direction(points: &[Point2]) -> Result<f64, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - mx;
        let dy = p.y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy == 0.0 {
        return Err(GeometryError::DegenerateInput("all points coincide".into()));
    }
    // principal axis of the scatter matrix
    Ok(canonical_angle(0.5 * (2.0 * sxy).atan2(sxx - syy)))
}

/// Rasterizes the union of disks: a pixel is set iff its center lies within
/// `radius` of at least one disk center.
pub fn disks_union_mask(
    disks: &[Disk],
    height: usize,
    width: usize,
) -> Result<PixelMask, GeometryError> {
    let mut mask = PixelMask::new(height, width)?;
    for d in disks {
        paint_disk(&mut mask, d.center, d.radius);
    }
    Ok(mask)
}

pub(crate) fn paint_disk(mask: &mut PixelMask, center: Point2, radius: f64) {
    if !(radius >= 0.0) || !center.is_finite() {
        return;
    }
    let r2 = radius * radius;
    let Some((r0, r1)) = span(center.y, radius, mask.height()) else {
        return;
    };
    let Some((c0, c1)) = span(center.x, radius, mask.width()) else {
        return;
    };
    for row in r0..r1 {
        let dy = row as f64 + 0.5 - center.y;
        for col in c0..c1 {
            let dx = col as f64 + 0.5 - center.x;
            if dx * dx + dy * dy <= r2 {
                mask.set(row, col, true);
            }
        }
    }
}

/// Index range of pixels whose centers may lie within `radius` of `c`.
pub(crate) fn span(c: f64, radius: f64, len: usize) -> Option<(usize, usize)> {
    let lo = (c - radius - 0.5).floor().max(0.0);
    let hi = (c + radius + 0.5).ceil().min(len as f64);
    if hi <= lo {
        return None;
    }
    Some((lo as usize, hi as usize))
}
