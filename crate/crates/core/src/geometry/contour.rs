use super::{PixelMask, Point2, Polygon};

/// Traces the outer boundary of the first 8-connected component (in raster
/// order) along pixel edges. Vertices sit on integer pixel corners and only
/// direction changes are emitted, so rasterizing the result reproduces the
/// component with its holes filled.
pub fn trace_outline(mask: &PixelMask) -> Option<Polygon> {
    let (r0, c0) = mask.iter_set().next()?;
    let start = (c0 as i64, r0 as i64);
    let east = (1i64, 0i64);

    let pixel = |x: i64, y: i64, d: (i64, i64), side: (i64, i64)| {
        let col = (2 * x + d.0 + side.0).div_euclid(2);
        let row = (2 * y + d.1 + side.1).div_euclid(2);
        mask.get_signed(row, col)
    };
    let next_dir = |x: i64, y: i64, d: (i64, i64)| {
        let left = (d.1, -d.0);
        let right = (-d.1, d.0);
        if pixel(x, y, d, left) {
            left
        } else if pixel(x, y, d, right) {
            d
        } else {
            right
        }
    };

    let mut vertices = vec![Point2::new(start.0 as f64, start.1 as f64)];
    let (mut x, mut y) = start;
    let mut d = east;
    let limit = 4 * (mask.width() + 1) * (mask.height() + 1);
    for _ in 0..limit {
        x += d.0;
        y += d.1;
        let nd = next_dir(x, y, d);
        if (x, y) == start && nd == east {
            break;
        }
        if nd != d {
            vertices.push(Point2::new(x as f64, y as f64));
        }
        d = nd;
    }
    Polygon::new(vertices).ok()
}
