use serde::{Deserialize, Serialize};

use super::{canonical_angle, GeometryError, Point2};

/// Rotated rectangle; `width` is the long side and `angle` its direction in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedRect {
    pub center: Point2,
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl RotatedRect {
    fn canonical(center: Point2, a: f64, b: f64, angle: f64) -> Self {
        if b > a {
            Self {
                center,
                width: b,
                height: a,
                angle: canonical_angle(angle + std::f64::consts::FRAC_PI_2),
            }
        } else {
            Self {
                center,
                width: a,
                height: b,
                angle: canonical_angle(angle),
            }
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Corners in order around the rectangle.
    pub fn corners(&self) -> [Point2; 4] {
        let (s, c) = self.angle.sin_cos();
        let u = Point2::new(c, s).scale(0.5 * self.width);
        let v = Point2::new(-s, c).scale(0.5 * self.height);
        let ctr = self.center;
        [
            ctr.sub(u).sub(v),
            ctr.add(u).sub(v),
            ctr.add(u).add(v),
            ctr.sub(u).add(v),
        ]
    }
}

/// Andrew's monotone chain. Returns the hull counter-clockwise in the math
/// frame, without collinear points; 1 or 2 points for degenerate inputs.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let turn = |o: Point2, a: Point2, b: Point2| a.sub(o).cross(b.sub(o));
    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minimum-area enclosing rectangle by rotating calipers over the convex hull.
pub fn min_area_rect(points: &[Point2]) -> Result<RotatedRect, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let hull = convex_hull(points);
    match hull.len() {
        1 => {
            return Ok(RotatedRect {
                center: hull[0],
                width: 0.0,
                height: 0.0,
                angle: 0.0,
            })
        }
        2 => {
            let d = hull[1].sub(hull[0]);
            return Ok(RotatedRect::canonical(
                hull[0].midpoint(hull[1]),
                d.norm(),
                0.0,
                d.y.atan2(d.x),
            ));
        }
        _ => {}
    }

    let m = hull.len();
    let at = |i: usize| hull[i % m];
    let frame = |i: usize| {
        let e = at(i + 1).sub(at(i));
        let u = e.scale(1.0 / e.norm());
        (u, Point2::new(-u.y, u.x))
    };

    let (u0, v0) = frame(0);
    let argbest = |key: &dyn Fn(Point2) -> f64| {
        (0..m).fold(0, |best, j| {
            if key(hull[j]) > key(hull[best]) {
                j
            } else {
                best
            }
        })
    };
    let mut j_max_u = argbest(&|p| p.dot(u0));
    let mut j_max_v = argbest(&|p| p.dot(v0));
    let mut j_min_u = argbest(&|p| -p.dot(u0));

    let mut best: Option<(f64, RotatedRect)> = None;
    for i in 0..m {
        let (u, v) = frame(i);
        let origin = at(i);
        let pu = |j: usize| at(j).sub(origin).dot(u);
        let pv = |j: usize| at(j).sub(origin).dot(v);
        let mut guard = 0;
        while pu(j_max_u + 1) >= pu(j_max_u) && guard < m {
            j_max_u += 1;
            guard += 1;
        }
        guard = 0;
        while pv(j_max_v + 1) >= pv(j_max_v) && guard < m {
            j_max_v += 1;
            guard += 1;
        }
        guard = 0;
        while pu(j_min_u + 1) <= pu(j_min_u) && guard < m {
            j_min_u += 1;
            guard += 1;
        }
        let (lo, hi, tall) = (pu(j_min_u), pu(j_max_u), pv(j_max_v));
        let area = (hi - lo) * tall;
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let center = origin
                .add(u.scale(0.5 * (lo + hi)))
                .add(v.scale(0.5 * tall));
            best = Some((
                area,
                RotatedRect::canonical(center, hi - lo, tall, u.y.atan2(u.x)),
            ));
        }
    }
    Ok(best.expect("hull has at least three points").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    /// Sweep over orientations in 0.1 degree steps.
    pub(crate) fn sweep_min_area(points: &[Point2]) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..900 {
            let t = (k as f64 * 0.1).to_radians();
            let (s, c) = t.sin_cos();
            let (mut u0, mut u1, mut v0, mut v1) = (
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
            );
            for p in points {
                let u = c * p.x + s * p.y;
                let v = -s * p.x + c * p.y;
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
            best = best.min((u1 - u0) * (v1 - v0));
        }
        best
    }

    #[test]
    fn axis_aligned_rect() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(40.0, 0.0),
            Point2::new(40.0, 10.0),
            Point2::new(0.0, 10.0),
        ];
        let r = min_area_rect(&pts).unwrap();
        assert!((r.width - 40.0).abs() < 1e-9 && (r.height - 10.0).abs() < 1e-9);
        assert!(r.angle.abs() < 1e-9);
        assert!(r.center.dist(Point2::new(20.0, 5.0)) < 1e-9);
    }

    #[test]
    fn rotated_unit_square() {
        let t = PI / 6.0;
        let (s, c) = t.sin_cos();
        let pts: Vec<_> = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| Point2::new(c * x - s * y, s * x + c * y))
            .collect();
        let r = min_area_rect(&pts).unwrap();
        let oracle = sweep_min_area(&pts);
        assert!((r.area() - 1.0).abs() <= 0.005);
        assert!((r.area() - oracle).abs() / oracle <= 0.005);
    }

    #[test]
    fn single_point_and_empty() {
        let r = min_area_rect(&[Point2::new(3.0, 4.0)]).unwrap();
        assert_eq!(
            (r.center, r.width, r.height),
            (Point2::new(3.0, 4.0), 0.0, 0.0)
        );
        assert_eq!(min_area_rect(&[]), Err(GeometryError::EmptyInput));
    }

    #[test]
    fn collinear_points() {
        let pts: Vec<_> = (0..5)
            .map(|i| Point2::new(i as f64, 2.0 * i as f64))
            .collect();
        let r = min_area_rect(&pts).unwrap();
        assert!((r.width - 80f64.sqrt()).abs() < 1e-9);
        assert_eq!(r.height, 0.0);
    }

    #[test]
    fn hull_drops_collinear() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
            Point2::new(1.0, 1.0),
        ];
        assert_eq!(convex_hull(&pts).len(), 4);
    }

    fn hull_area(h: &[Point2]) -> f64 {
        let n = h.len();
        (0..n)
            .map(|i| h[i].cross(h[(i + 1) % n]))
            .sum::<f64>()
            .abs()
            * 0.5
    }

    /// Areas of the hull-edge-aligned rectangles, ascending.
    fn edge_areas(points: &[Point2]) -> Vec<f64> {
        let hull = convex_hull(points);
        let m = hull.len();
        let mut out: Vec<f64> = (0..m)
            .map(|i| {
                let e = hull[(i + 1) % m].sub(hull[i]);
                let u = e.scale(1.0 / e.norm());
                let v = Point2::new(-u.y, u.x);
                let ext = |a: Point2| {
                    hull.iter()
                        .map(|p| p.dot(a))
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                            (lo.min(x), hi.max(x))
                        })
                };
                let ((u0, u1), (v0, v1)) = (ext(u), ext(v));
                (u1 - u0) * (v1 - v0)
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    #[test]
    fn random_sets_match_sweep_and_rotate_covariantly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(3..30);
            let pts: Vec<_> = (0..n)
                .map(|_| Point2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-8.0..8.0)))
                .collect();
            let r = min_area_rect(&pts).unwrap();
            let oracle = sweep_min_area(&pts);
            assert!(r.area() <= oracle * (1.0 + 1e-9));
            assert!((oracle - r.area()) / oracle <= 0.005);
            assert!(r.area() >= hull_area(&convex_hull(&pts)) * (1.0 - 1e-12));
            let areas = edge_areas(&pts);
            assert!((areas[0] - r.area()).abs() <= 1e-9 * r.area());
            let tied = areas.len() > 1 && areas[1] - areas[0] <= 1e-6 * areas[0];

            let phi: f64 = rng.gen_range(0.0..PI);
            let (s, c) = phi.sin_cos();
            let rot: Vec<_> = pts
                .iter()
                .map(|p| Point2::new(c * p.x - s * p.y, s * p.x + c * p.y))
                .collect();
            let rr = min_area_rect(&rot).unwrap();
            assert!((rr.area() - r.area()).abs() <= 1e-6 * r.area());
            if !tied && (r.width - r.height) > 1e-3 * r.width {
                let d = (rr.angle - (r.angle + phi)).rem_euclid(PI);
                assert!(
                    d.min(PI - d) < 1e-6,
                    "angle {} vs {}",
                    rr.angle,
                    r.angle + phi
                );
            }
        }
    }
}
