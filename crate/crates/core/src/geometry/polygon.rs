use serde::{Deserialize, Serialize};

use super::{GeometryError, PixelMask, Point2};

/// Vertex order, from the sign of the shoelace area in the y-down frame.
/// `Positive` is clockwise on screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winding {
    Positive,
    Negative,
    Degenerate,
}

/// Closed polygon; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polygon {
    vertices: Vec<Point2>,
    winding: Winding,
}

impl TryFrom<Vec<Point2>> for Polygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Point2>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::DegeneratePolygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let a = shoelace(&vertices);
        let winding = if a > 0.0 {
            Winding::Positive
        } else if a < 0.0 {
            Winding::Negative
        } else {
            Winding::Degenerate
        };
        Ok(Self { vertices, winding })
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self, GeometryError> {
        Self::new(coords.iter().map(|&(x, y)| Point2::new(x, y)).collect())
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn winding(&self) -> Winding {
        self.winding
    }

    pub fn signed_area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1` (cyclically).
    pub fn edge(&self, i: usize) -> (Point2, Point2) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        (0..self.vertices.len()).map(|i| self.edge(i))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point2::new(p.x + dx, p.y + dy))
                .collect(),
            winding: self.winding,
        }
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        Polygon::new(v).expect("reversal preserves validity")
    }

    /// Rotates the vertex list so that vertex `k` comes first.
    pub fn rotated_start(&self, k: usize) -> Self {
        let mut v = self.vertices.clone();
        let n = v.len();
        v.rotate_left(k % n);
        Polygon::new(v).expect("cyclic shift preserves validity")
    }

    /// Rasterizes with the pixel-center rule; see [`rasterize_polygon`].
    pub fn rasterize(&self, height: usize, width: usize) -> Result<PixelMask, GeometryError> {
        rasterize_polygon(self, height, width)
    }
}

fn shoelace(v: &[Point2]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Scanline fill: pixel `(row, col)` is set iff its center lies inside the
/// polygon under the even-odd rule, or exactly on its boundary.
pub fn rasterize_polygon(
    poly: &Polygon,
    height: usize,
    width: usize,
) -> Result<PixelMask, GeometryError> {
    if poly.winding == Winding::Degenerate {
        return Err(GeometryError::DegeneratePolygon("zero area".into()));
    }
    let mut mask = PixelMask::new(height, width)?;
    let (min_y, max_y) = poly
        .vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    let Some((row0, row1)) = center_range(min_y, max_y, height) else {
        return Ok(mask);
    };

    let mut xs: Vec<f64> = Vec::with_capacity(poly.len());
    for row in row0..=row1 {
        let y = row as f64 + 0.5;
        xs.clear();
        for (a, b) in poly.edges() {
            if (a.y <= y) != (b.y <= y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            if let Some((c0, c1)) = center_range(pair[0], pair[1], width) {
                for col in c0..=c1 {
                    mask.set(row, col, true);
                }
            }
        }
    }

    // centers lying exactly on an edge count as inside
    for (a, b) in poly.edges() {
        let Some((r0, r1)) = center_range(a.y.min(b.y), a.y.max(b.y), height) else {
            continue;
        };
        for row in r0..=r1 {
            let y = row as f64 + 0.5;
            if a.y == b.y {
                if let Some((c0, c1)) = center_range(a.x.min(b.x), a.x.max(b.x), width) {
                    for col in c0..=c1 {
                        mask.set(row, col, true);
                    }
                }
            } else {
                let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                let c = x - 0.5;
                if c.fract() == 0.0 && c >= 0.0 && c < width as f64 {
                    mask.set(row, c as usize, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Indices `i` in `[0, len)` with `lo <= i + 0.5 <= hi`, as an inclusive range.
fn center_range(lo: f64, hi: f64, len: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(len as f64 - 1.0);
    if last < first {
        return None;
    }
    Some((first as usize, last as usize))
}

/// Even-odd containment test (boundary points are not special-cased).
pub fn point_in_polygon(p: Point2, poly: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if (a.y <= p.y) != (b.y <= p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test.
pub(crate) fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a.add(ab.scale(t)))
}

/// Euclidean distance between closed segments `ab` and `cd`.
pub fn segment_distance(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Distance between two polygonal regions; 0 when they overlap or touch.
pub fn polygon_distance(p: &Polygon, q: &Polygon) -> f64 {
    if point_in_polygon(p.vertices[0], q) || point_in_polygon(q.vertices[0], p) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for (a, b) in p.edges() {
        for (c, d) in q.edges() {
            best = best.min(segment_distance(a, b, c, d));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

/// `true` iff no two non-adjacent edges meet and adjacent edges share only
/// their common vertex.
pub fn is_simple(poly: &Polygon) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = poly.edge(i);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let (c, d) = poly.edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // shared vertex is expected; a collinear fold-back is not
                let (shared, other_ab, other_cd) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if orient(shared, other_ab, other_cd) == 0.0
                    && other_ab.sub(shared).dot(other_cd.sub(shared)) > 0.0
                {
                    return false;
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}
