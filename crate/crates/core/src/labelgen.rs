//! Ground-truth generation from polygon annotations.
//!
//! A snake-shaped polygon is split at its head and tail edges into two
//! sidelines. Paired anchors sampled along the sidelines give the center
//! line (their midpoints) and the radius (half their distance). The center
//! line is shortened at both ends by half the end radius, and the center-line
//! map is drawn as disks of one fifth of the local radius along it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    fit_direction, is_simple, rasterize_polygon, span, Disk, GeometryError, PixelMask, Point2,
    Polygon,
};
use crate::maps::{GeometryMaps, MapsError};

/// Number of anchors per sideline when not specified.
pub const DEFAULT_SAMPLES: usize = 32;
/// Neighbourhood size for the orientation fit.
const THETA_WINDOW: usize = 5;
/// Tolerance when comparing sums of the edge measurement.
const M_TIE_EPS: f64 = 1e-6;
/// Center-line half width as a fraction of the local radius.
pub const TCL_EXPAND: f64 = 0.2;
/// Fraction of the end radius removed from each end of the center line.
pub const END_SHRINK: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("unsupported polygon: {0}")]
    UnsupportedPolygon(String),
    #[error("forked instance: best head/tail candidates {0} and {1} are adjacent edges")]
    ForkedInstance(usize, usize),
    #[error("degenerate width: paired anchors {0} coincide")]
    DegenerateWidth(usize),
    #[error("invalid sample count {0}, need at least 2")]
    InvalidSampling(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Maps(#[from] MapsError),
}

/// Ordered disks describing one text instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnakeDescriptor {
    pub disks: Vec<Disk>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_polygon: Option<Polygon>,
}

impl SnakeDescriptor {
    pub fn new(disks: Vec<Disk>) -> Self {
        Self {
            disks,
            source_polygon: None,
        }
    }

    pub fn centers(&self) -> Vec<Point2> {
        self.disks.iter().map(|d| d.center).collect()
    }

    /// Polyline length of the center line.
    pub fn axis_length(&self) -> f64 {
        self.disks
            .windows(2)
            .map(|w| w[0].center.dist(w[1].center))
            .sum()
    }

    pub fn mean_radius(&self) -> f64 {
        if self.disks.is_empty() {
            return 0.0;
        }
        self.disks.iter().map(|d| d.radius).sum::<f64>() / self.disks.len() as f64
    }

    /// Checks that radii are positive, consecutive centers distinct and
    /// consecutive disks overlapping.
    pub fn is_well_formed(&self) -> bool {
        !self.disks.is_empty()
            && self
                .disks
                .iter()
                .all(|d| d.radius > 0.0 && d.center.is_finite())
            && self.disks.windows(2).all(|w| {
                let gap = w[0].center.dist(w[1].center);
                gap > 0.0 && gap < w[0].radius + w[1].radius
            })
    }
}

/// A polygon annotation; `ignore` marks don't-care regions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedInstance {
    pub polygon: Polygon,
    pub ignore: bool,
}

impl AnnotatedInstance {
    pub fn new(polygon: Polygon) -> Self {
        Self {
            polygon,
            ignore: false,
        }
    }

    pub fn ignored(polygon: Polygon) -> Self {
        Self {
            polygon,
            ignore: true,
        }
    }
}

/// Anchor count per sideline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Fixed(usize),
    /// One anchor per 2 px of the longer sideline, clamped to `[8, 128]`.
    Adaptive,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Fixed(DEFAULT_SAMPLES)
    }
}

fn edge_vec(poly: &Polygon, i: usize) -> Point2 {
    let (a, b) = poly.edge(i);
    b.sub(a)
}

fn cos_between(a: Point2, b: Point2) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0)
}

/// Edge measurement `M(e_i) = cos<e_{i+1}, e_{i-1}>`: close to -1 when the
/// two neighbouring edges run parallel in opposite directions.
pub fn edge_measure(poly: &Polygon, i: usize) -> f64 {
    let n = poly.len();
    cos_between(edge_vec(poly, (i + 1) % n), edge_vec(poly, (i + n - 1) % n))
}

/// Indices `(head, tail)` of the head and tail edges, `head < tail`.
///
/// Quadrilaterals take the opposite pair with the smaller total length. Other
/// polygons take the non-adjacent pair whose measurements sum closest to -2;
/// near-ties go to the pair with the smaller total length.
pub fn edge_head_tail(poly: &Polygon) -> Result<(usize, usize), LabelError> {
    let n = poly.len();
    if n < 4 {
        return Err(LabelError::UnsupportedPolygon(format!(
            "{n} vertices, need at least 4"
        )));
    }
    if poly.edges().any(|(a, b)| a == b) {
        return Err(LabelError::UnsupportedPolygon("zero-length edge".into()));
    }
    if !is_simple(poly) {
        return Err(LabelError::UnsupportedPolygon("self-intersecting".into()));
    }
    let len = |i: usize| edge_vec(poly, i).norm();

    if n == 4 {
        return Ok(if len(1) + len(3) < len(0) + len(2) {
            (1, 3)
        } else {
            (0, 2)
        });
    }

    let m: Vec<f64> = (0..n).map(|i| edge_measure(poly, i)).collect();
    let adjacent = |i: usize, j: usize| j == i + 1 || (i == 0 && j == n - 1);

    let mut best_apart = f64::INFINITY;
    let mut best_adjacent = (f64::INFINITY, 0, 0);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = m[i] + m[j];
            if adjacent(i, j) {
                if s < best_adjacent.0 {
                    best_adjacent = (s, i, j);
                }
            } else {
                best_apart = best_apart.min(s);
            }
        }
    }
    if best_adjacent.0 < best_apart - M_TIE_EPS {
        return Err(LabelError::ForkedInstance(best_adjacent.1, best_adjacent.2));
    }

    let mut pick: Option<(f64, usize, usize)> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            if adjacent(i, j) || m[i] + m[j] > best_apart + M_TIE_EPS {
                continue;
            }
            let total = len(i) + len(j);
            if pick.is_none_or(|(t, _, _)| total < t) {
                pick = Some((total, i, j));
            }
        }
    }
    let (_, i, j) = pick.expect("a polygon with 5+ vertices has non-adjacent edges");
    Ok((i, j))
}

/// `n` points spaced uniformly by arc length along an open polyline,
/// including both endpoints.
pub fn resample_polyline(points: &[Point2], n: usize) -> Vec<Point2> {
    let cum = cumulative_length(points);
    let total = *cum.last().unwrap_or(&0.0);
    (0..n)
        .map(|k| {
            let s = if n == 1 {
                0.0
            } else {
                total * k as f64 / (n - 1) as f64
            };
            point_at(points, &cum, s)
        })
        .collect()
}

fn cumulative_length(points: &[Point2]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for (k, p) in points.iter().enumerate() {
        if k > 0 {
            acc += points[k - 1].dist(*p);
        }
        cum.push(acc);
    }
    cum
}

/// Segment index and fraction at arc length `s`.
fn locate(cum: &[f64], s: f64) -> (usize, f64) {
    let last = cum.len() - 1;
    if last == 0 || s <= 0.0 {
        return (0, 0.0);
    }
    if s >= cum[last] {
        return (last - 1, 1.0);
    }
    let k = cum.partition_point(|&c| c <= s).clamp(1, last) - 1;
    let seg = cum[k + 1] - cum[k];
    let t = if seg > 0.0 { (s - cum[k]) / seg } else { 0.0 };
    (k, t)
}

fn point_at(points: &[Point2], cum: &[f64], s: f64) -> Point2 {
    if points.len() == 1 {
        return points[0];
    }
    let (k, t) = locate(cum, s);
    points[k].lerp(points[k + 1], t)
}

fn sideline(poly: &Polygon, from: usize, to: usize) -> Vec<Point2> {
    let n = poly.len();
    let v = poly.vertices();
    let mut out = vec![v[from % n]];
    let mut i = from % n;
    while i != to % n {
        i = (i + 1) % n;
        out.push(v[i]);
    }
    out
}

/// Extracts the shrunk center line with radii and orientations.
pub fn extract_snake(
    instance: &AnnotatedInstance,
    sampling: Sampling,
) -> Result<SnakeDescriptor, LabelError> {
    let poly = &instance.polygon;
    let (head, tail) = edge_head_tail(poly)?;
    let n = poly.len();

    // both sidelines run from the head edge towards the tail edge
    let side_a = sideline(poly, head + 1, tail);
    let mut side_b = sideline(poly, tail + 1, head + n);
    side_b.reverse();

    let samples = match sampling {
        Sampling::Fixed(k) if k < 2 => return Err(LabelError::InvalidSampling(k)),
        Sampling::Fixed(k) => k,
        Sampling::Adaptive => {
            let longest = polyline_length(&side_a).max(polyline_length(&side_b));
            ((longest / 2.0).round() as usize).clamp(8, 128)
        }
    };

    let anchors_a = resample_polyline(&side_a, samples);
    let anchors_b = resample_polyline(&side_b, samples);
    let mut centers = Vec::with_capacity(samples);
    let mut radii = Vec::with_capacity(samples);
    for (k, (a, b)) in anchors_a.iter().zip(&anchors_b).enumerate() {
        let d = a.dist(*b);
        if d < 1e-9 {
            return Err(LabelError::DegenerateWidth(k));
        }
        centers.push(a.midpoint(*b));
        radii.push(0.5 * d);
    }
    // orientation across the text at the middle anchor pair, used when the
    // center line collapses to a point
    let mid = samples / 2;
    let across = anchors_b[mid].sub(anchors_a[mid]);
    let fallback_theta = across.y.atan2(across.x) + std::f64::consts::FRAC_PI_2;

    let cum = cumulative_length(&centers);
    let total = *cum.last().unwrap();
    let start = END_SHRINK * radii[0];
    let end = total - END_SHRINK * radii[samples - 1];

    let radius_at = |s: f64| {
        let (k, t) = locate(&cum, s);
        if centers.len() == 1 {
            radii[0]
        } else {
            radii[k] + (radii[k + 1] - radii[k]) * t
        }
    };

    let axis: Vec<(Point2, f64)> = if end > start {
        (0..samples)
            .map(|k| {
                let s = start + (end - start) * k as f64 / (samples - 1) as f64;
                (point_at(&centers, &cum, s), radius_at(s))
            })
            .collect()
    } else {
        let s = 0.5 * total;
        vec![(point_at(&centers, &cum, s), radius_at(s))]
    };

    let whole_theta = fit_direction(&centers).unwrap_or(fallback_theta);
    let pts: Vec<Point2> = axis.iter().map(|(p, _)| *p).collect();
    let disks = axis
        .iter()
        .enumerate()
        .map(|(k, &(c, r))| {
            let theta = if pts.len() >= 2 {
                let (lo, hi) = window(k, pts.len(), THETA_WINDOW);
                fit_direction(&pts[lo..hi]).unwrap_or(whole_theta)
            } else {
                whole_theta
            };
            Disk::new(c, r, theta)
        })
        .collect();

    Ok(SnakeDescriptor {
        disks,
        source_polygon: Some(poly.clone()),
    })
}

fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// `size` consecutive indices around `k`, shifted to stay within `0..len`.
fn window(k: usize, len: usize, size: usize) -> (usize, usize) {
    let size = size.min(len);
    let lo = k.saturating_sub(size / 2).min(len - size);
    (lo, lo + size)
}

/// Interpolates the disks so consecutive centers are at most `max_step` apart.
/// Orientations are blended on the doubled angle, which respects the
/// undirected nature of `theta`.
pub fn densify(disks: &[Disk], max_step: f64) -> Vec<Disk> {
    let mut out = Vec::with_capacity(disks.len());
    let Some(first) = disks.first() else {
        return out;
    };
    out.push(*first);
    for w in disks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let steps = (a.center.dist(b.center) / max_step).ceil().max(1.0) as usize;
        let (a2s, a2c) = (2.0 * a.theta).sin_cos();
        let (b2s, b2c) = (2.0 * b.theta).sin_cos();
        for k in 1..=steps {
            let t = k as f64 / steps as f64;
            let (s2, c2) = (a2s + (b2s - a2s) * t, a2c + (b2c - a2c) * t);
            let theta = if s2.hypot(c2) < 1e-12 {
                a.theta
            } else {
                0.5 * s2.atan2(c2)
            };
            out.push(Disk::new(
                a.center.lerp(b.center, t),
                a.radius + (b.radius - a.radius) * t,
                theta,
            ));
        }
    }
    out
}

/// Renders ground-truth maps from snakes and their text-region polygons.
pub fn render_label_maps(
    snakes: &[SnakeDescriptor],
    regions: &[Polygon],
    height: usize,
    width: usize,
) -> Result<GeometryMaps, LabelError> {
    let mut maps = GeometryMaps::zeros(height, width)?;
    let mut tr = PixelMask::new(height, width)?;
    for poly in regions {
        tr.union_in_place(&rasterize_polygon(poly, height, width)?)?;
    }
    let dense: Vec<Vec<Disk>> = snakes.iter().map(|s| densify(&s.disks, 0.5)).collect();

    let mut tcl = tr.empty_like();
    for disks in &dense {
        for d in disks {
            paint_tcl(&mut tcl, &tr, d);
        }
    }

    // nearest axis sample per center-line pixel; strict comparison keeps the
    // lower index on ties
    let mut best = vec![f64::INFINITY; height * width];
    let mut owner: Vec<Option<Disk>> = vec![None; height * width];
    for disks in &dense {
        let reach = disks.iter().map(|d| d.radius).fold(0.0, f64::max) * TCL_EXPAND + 1.0;
        for d in disks {
            let (Some((r0, r1)), Some((c0, c1))) = (
                span(d.center.y, reach, height),
                span(d.center.x, reach, width),
            ) else {
                continue;
            };
            for row in r0..r1 {
                for col in c0..c1 {
                    if !tcl.get(row, col) {
                        continue;
                    }
                    let p = Point2::new(col as f64 + 0.5, row as f64 + 0.5);
                    let dist = p.dist_sq(d.center);
                    let i = row * width + col;
                    if dist < best[i] {
                        best[i] = dist;
                        owner[i] = Some(*d);
                    }
                }
            }
        }
    }

    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            if tr.get(row, col) {
                maps.tr_mut()[i] = 1.0;
            }
            if let Some(d) = owner[i] {
                let (s, c) = d.theta.sin_cos();
                maps.tcl_mut()[i] = 1.0;
                maps.r_mut()[i] = d.radius as f32;
                maps.cos_t_mut()[i] = c as f32;
                maps.sin_t_mut()[i] = s as f32;
            }
        }
    }
    Ok(maps)
}

fn paint_tcl(tcl: &mut PixelMask, tr: &PixelMask, d: &Disk) {
    let rho = d.radius * TCL_EXPAND;
    let r2 = rho * rho;
    let (Some((r0, r1)), Some((c0, c1))) = (
        span(d.center.y, rho, tcl.height()),
        span(d.center.x, rho, tcl.width()),
    ) else {
        return;
    };
    for row in r0..r1 {
        for col in c0..c1 {
            let p = Point2::new(col as f64 + 0.5, row as f64 + 0.5);
            if p.dist_sq(d.center) <= r2 && tr.get(row, col) {
                tcl.set(row, col, true);
            }
        }
    }
}

/// Full ground truth for one image.
#[derive(Debug, Clone)]
pub struct LabelSet {
    pub maps: GeometryMaps,
    /// Union of the don't-care polygons.
    pub ignore: PixelMask,
    /// One snake per non-ignored instance, in input order.
    pub snakes: Vec<SnakeDescriptor>,
}

pub fn generate_labels(
    instances: &[AnnotatedInstance],
    height: usize,
    width: usize,
    sampling: Sampling,
) -> Result<LabelSet, LabelError> {
    let mut snakes = Vec::new();
    let mut regions = Vec::new();
    let mut ignore = PixelMask::new(height, width)?;
    for inst in instances {
        if inst.ignore {
            ignore.union_in_place(&rasterize_polygon(&inst.polygon, height, width)?)?;
        } else {
            snakes.push(extract_snake(inst, sampling)?);
            regions.push(inst.polygon.clone());
        }
    }
    let maps = render_label_maps(&snakes, &regions, height, width)?;
    Ok(LabelSet {
        maps,
        ignore,
        snakes,
    })
}
