//! Instance reconstruction from geometry maps.
//!
//! Center-line pixels are split into 8-connected components. Each component
//! is traced from a seed pixel in both directions by alternately striding
//! along the local orientation and re-centering across the band. Disks placed
//! along the traced axis give the instance region, which is then checked
//! against the text-region map.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    canonical_angle, disks_union_mask, min_area_rect, trace_outline, Disk, GeometryError,
    PixelMask, Point2, Polygon,
};
use crate::labelgen::SnakeDescriptor;
use crate::maps::{binarize, GeometryMaps, MapsError};

/// Step of the walk across the band when centralizing.
const NORMAL_STEP: f64 = 0.5;
/// Bisection rounds refining each band edge.
const EDGE_BISECTIONS: usize = 16;
const MAX_HALVINGS: usize = 6;
const MIN_STRIDE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("point ({}, {}) is not on the center-line mask", .0.x, .0.y)]
    OffComponent(Point2),
    #[error("empty axis")]
    EmptyAxis,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Maps(#[from] MapsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One 8-connected group of center-line pixels, listed in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TclComponent {
    pub id: usize,
    /// `(row, col)` pairs.
    pub pixels: Vec<(usize, usize)>,
}

/// A point on a traced center line with the radius and orientation read there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisPoint {
    pub point: Point2,
    pub radius: f64,
    pub theta: f64,
}

/// A reconstructed component before filtering.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub component: TclComponent,
    pub snake: SnakeDescriptor,
    pub region: PixelMask,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub snake: SnakeDescriptor,
    pub region: PixelMask,
    /// Outline of `region` along pixel edges.
    pub boundary: Polygon,
    /// Mean text-region score over `region`.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocParams {
    pub t_tr: f64,
    pub t_tcl: f64,
    /// Enables the size filters below.
    pub size_filter: bool,
    pub min_side_px: f64,
    pub min_area_px: f64,
    pub tcl_count_factor: f64,
    pub tr_overlap_min: f64,
}

impl Default for PostprocParams {
    fn default() -> Self {
        Self {
            t_tr: 0.4,
            t_tcl: 0.6,
            size_filter: false,
            min_side_px: 10.0,
            min_area_px: 300.0,
            tcl_count_factor: 0.2,
            tr_overlap_min: 0.5,
        }
    }
}

impl PostprocParams {
    /// Defaults plus the ICDAR size filters (short side 10 px, area 300 px²).
    pub fn icdar() -> Self {
        Self {
            size_filter: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PostprocError> {
        for (name, t) in [("t_tr", self.t_tr), ("t_tcl", self.t_tcl)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(PostprocError::InvalidParams(format!(
                    "{name} = {t} outside (0, 1)"
                )));
            }
        }
        for (name, v) in [
            ("min_side_px", self.min_side_px),
            ("min_area_px", self.min_area_px),
            ("tcl_count_factor", self.tcl_count_factor),
            ("tr_overlap_min", self.tr_overlap_min),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PostprocError::InvalidParams(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (ka, kb) = (self.rank[ra as usize], self.rank[rb as usize]);
        if ka < kb {
            self.parent[ra as usize] = rb;
        } else {
            self.parent[rb as usize] = ra;
            if ka == kb {
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Splits the set pixels into 8-connected components with a disjoint-set
/// forest. Components are numbered by their first pixel in raster order.
pub fn segment_instances(tcl_mask: &PixelMask) -> Vec<TclComponent> {
    let (h, w) = tcl_mask.dims();
    let pixels: Vec<(usize, usize)> = tcl_mask.iter_set().collect();
    if pixels.is_empty() {
        return Vec::new();
    }
    // dense label per pixel, u32::MAX for background
    let mut label = vec![u32::MAX; h * w];
    for (k, &(r, c)) in pixels.iter().enumerate() {
        label[r * w + c] = k as u32;
    }
    let mut ds = DisjointSet::new(pixels.len());
    for (k, &(r, c)) in pixels.iter().enumerate() {
        let mut link = |rr: usize, cc: usize| {
            let l = label[rr * w + cc];
            if l != u32::MAX {
                ds.union(k as u32, l);
            }
        };
        if c > 0 {
            link(r, c - 1);
        }
        if r > 0 {
            if c > 0 {
                link(r - 1, c - 1);
            }
            link(r - 1, c);
            if c + 1 < w {
                link(r - 1, c + 1);
            }
        }
    }

    let mut slot = vec![u32::MAX; pixels.len()];
    let mut comps: Vec<TclComponent> = Vec::new();
    for (k, &p) in pixels.iter().enumerate() {
        let root = ds.find(k as u32) as usize;
        if slot[root] == u32::MAX {
            slot[root] = comps.len() as u32;
            comps.push(TclComponent {
                id: comps.len(),
                pixels: Vec::new(),
            });
        }
        comps[slot[root] as usize].pixels.push(p);
    }
    comps
}

fn on_mask(mask: &PixelMask, p: Point2) -> bool {
    p.is_finite() && mask.get_signed(p.y.floor() as i64, p.x.floor() as i64)
}

fn geometry_at(maps: &GeometryMaps, p: Point2) -> (f64, f64, f64) {
    match maps.pixel_at(p) {
        Some((row, col)) => maps.geometry_at(row, col),
        None => (0.0, 1.0, 0.0),
    }
}

/// Distance from `pt` to the mask edge along `dir`, walking in half-pixel
/// steps up to `limit` and refining the last step by bisection.
fn run_length(mask: &PixelMask, pt: Point2, dir: Point2, limit: f64) -> f64 {
    let mut inside = 0.0;
    let mut t = NORMAL_STEP;
    while t <= limit {
        if !on_mask(mask, pt.add(dir.scale(t))) {
            let (mut lo, mut hi) = (inside, t);
            for _ in 0..EDGE_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if on_mask(mask, pt.add(dir.scale(mid))) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        inside = t;
        t += NORMAL_STEP;
    }
    inside
}

/// Moves `pt` to the middle of the mask run along the local normal.
pub fn centralize(
    pt: Point2,
    maps: &GeometryMaps,
    tcl_mask: &PixelMask,
) -> Result<Point2, PostprocError> {
    if !on_mask(tcl_mask, pt) {
        return Err(PostprocError::OffComponent(pt));
    }
    let (r, c, s) = geometry_at(maps, pt);
    let normal = Point2::new(-s, c);
    let limit = 2.0 * r.max(0.0) + 2.0;
    let fwd = run_length(tcl_mask, pt, normal, limit);
    let back = run_length(tcl_mask, pt, normal.scale(-1.0), limit);
    Ok(pt.add(normal.scale(0.5 * (fwd - back))))
}

/// One stride of half the local radius along the local orientation, shortened
/// by halving when it would leave the mask. `None` means the end is reached.
pub fn stride_step(
    pt: Point2,
    maps: &GeometryMaps,
    tcl_mask: &PixelMask,
    sign: f64,
) -> Result<Option<Point2>, PostprocError> {
    if !on_mask(tcl_mask, pt) {
        return Err(PostprocError::OffComponent(pt));
    }
    let (r, c, s) = geometry_at(maps, pt);
    let dir = Point2::new(c, s).scale(sign.signum());
    let mut step = 0.5 * r;
    for k in 0..=MAX_HALVINGS {
        if k > 0 {
            step *= 0.5;
            if step < MIN_STRIDE {
                break;
            }
        }
        if !(step > 0.0) {
            break;
        }
        let cand = pt.add(dir.scale(step));
        if on_mask(tcl_mask, cand) {
            return Ok(Some(cand));
        }
    }
    Ok(None)
}

/// Pixel nearest the component centroid; ties go to the first in raster order.
pub fn seed_pixel(comp: &TclComponent) -> (usize, usize) {
    let n = comp.pixels.len() as f64;
    let (sr, sc) = comp
        .pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
    let (mr, mc) = (sr / n, sc / n);
    let mut best = comp.pixels[0];
    let mut best_d = f64::INFINITY;
    for &(r, c) in &comp.pixels {
        let d = (r as f64 - mr).powi(2) + (c as f64 - mc).powi(2);
        if d < best_d {
            best_d = d;
            best = (r, c);
        }
    }
    best
}

fn component_mask(
    comp: &TclComponent,
    height: usize,
    width: usize,
) -> Result<PixelMask, PostprocError> {
    let mut m = PixelMask::new(height, width)?;
    for &(r, c) in &comp.pixels {
        m.set(r, c, true);
    }
    Ok(m)
}

fn cell(p: Point2) -> (i64, i64) {
    (p.x.floor() as i64, p.y.floor() as i64)
}

/// Traces the center line of `comp` starting from its seed pixel.
pub fn trace_axis(
    comp: &TclComponent,
    maps: &GeometryMaps,
    tcl_mask: &PixelMask,
) -> Result<Vec<AxisPoint>, PostprocError> {
    let (r, c) = seed_pixel(comp);
    trace_axis_from(
        comp,
        maps,
        tcl_mask,
        Point2::new(c as f64 + 0.5, r as f64 + 0.5),
    )
}

/// Traces the center line of `comp` from an arbitrary start point on it.
/// Striding stays on the component's own pixels.
pub fn trace_axis_from(
    comp: &TclComponent,
    maps: &GeometryMaps,
    tcl_mask: &PixelMask,
    start: Point2,
) -> Result<Vec<AxisPoint>, PostprocError> {
    if comp.pixels.is_empty() {
        return Err(PostprocError::EmptyAxis);
    }
    let own = component_mask(comp, tcl_mask.height(), tcl_mask.width())?;
    if !on_mask(&own, start) {
        return Err(PostprocError::OffComponent(start));
    }
    let recenter = |p: Point2| -> Result<Point2, PostprocError> {
        let q = centralize(p, maps, &own)?;
        Ok(if on_mask(&own, q) { q } else { p })
    };

    let seed = recenter(start)?;
    let mut visited: HashSet<(i64, i64)> = HashSet::new();
    visited.insert(cell(seed));
    let mut budget = 4 * comp.pixels.len();
    let mut halves: [Vec<Point2>; 2] = [Vec::new(), Vec::new()];
    for (half, initial_sign) in halves.iter_mut().zip([1.0, -1.0]) {
        let mut pt = seed;
        let mut prev: Option<Point2> = None;
        while budget > 0 {
            budget -= 1;
            let sign = match prev {
                None => initial_sign,
                Some(d) => {
                    let (_, c, s) = geometry_at(maps, pt);
                    if Point2::new(c, s).dot(d) >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            let Some(next) = stride_step(pt, maps, &own, sign)? else {
                break;
            };
            let q = recenter(next)?;
            if !visited.insert(cell(q)) {
                break;
            }
            half.push(q);
            prev = Some(q.sub(pt));
            pt = q;
        }
    }

    let [forward, backward] = halves;
    let points = backward
        .into_iter()
        .rev()
        .chain(std::iter::once(seed))
        .chain(forward);
    Ok(points
        .map(|p| {
            let (radius, c, s) = geometry_at(maps, p);
            AxisPoint {
                point: p,
                radius,
                theta: canonical_angle(s.atan2(c)),
            }
        })
        .collect())
}

/// Disks along the axis and the union of their pixels. Disks with a
/// non-positive radius are kept in the snake but paint nothing.
pub fn reconstruct(
    axis: &[AxisPoint],
    height: usize,
    width: usize,
) -> Result<(SnakeDescriptor, PixelMask), PostprocError> {
    if axis.is_empty() {
        return Err(PostprocError::EmptyAxis);
    }
    let disks: Vec<Disk> = axis
        .iter()
        .map(|a| Disk::new(a.point, a.radius, a.theta))
        .collect();
    let painted: Vec<Disk> = disks.iter().copied().filter(|d| d.radius > 0.0).collect();
    let mask = disks_union_mask(&painted, height, width)?;
    Ok((SnakeDescriptor::new(disks), mask))
}

/// Applies the false-positive heuristics and builds the surviving detections.
pub fn filter_candidates(
    cands: Vec<Candidate>,
    maps: &GeometryMaps,
    params: &PostprocParams,
) -> Vec<Detection> {
    cands
        .into_iter()
        .filter_map(|c| accept(c, maps, params))
        .collect()
}

fn accept(cand: Candidate, maps: &GeometryMaps, params: &PostprocParams) -> Option<Detection> {
    let Candidate {
        component,
        snake,
        region,
    } = cand;
    if (component.pixels.len() as f64) < params.tcl_count_factor * snake.mean_radius() {
        return None;
    }
    let area = region.count();
    if area == 0 {
        return None;
    }
    let tr = maps.tr();
    let (mut on_tr, mut sum) = (0usize, 0.0f64);
    for (r, c) in region.iter_set() {
        let v = tr[maps.index(r, c)] as f64;
        sum += v;
        if v >= params.t_tr {
            on_tr += 1;
        }
    }
    if (on_tr as f64) < params.tr_overlap_min * area as f64 {
        return None;
    }
    let boundary = trace_outline(&region)?;
    if params.size_filter {
        let rect = min_area_rect(boundary.vertices()).ok()?;
        if rect.height < params.min_side_px || (area as f64) < params.min_area_px {
            return None;
        }
    }
    Some(Detection {
        snake,
        region,
        boundary,
        score: (sum / area as f64).clamp(0.0, 1.0),
    })
}

fn candidate(
    comp: TclComponent,
    maps: &GeometryMaps,
    tcl_mask: &PixelMask,
) -> Result<Candidate, PostprocError> {
    let axis = trace_axis(&comp, maps, tcl_mask)?;
    let (snake, region) = reconstruct(&axis, maps.height(), maps.width())?;
    Ok(Candidate {
        component: comp,
        snake,
        region,
    })
}

/// Full reconstruction: binarize, segment, trace, reconstruct and filter.
pub fn detect(
    maps: &GeometryMaps,
    params: &PostprocParams,
) -> Result<Vec<Detection>, PostprocError> {
    params.validate()?;
    let bin = binarize(maps, params.t_tr, params.t_tcl)?;
    let cands = segment_instances(&bin.tcl_mask)
        .into_iter()
        .map(|comp| candidate(comp, maps, &bin.tcl_mask))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(filter_candidates(cands, maps, params))
}

/// [`detect`] with components traced in parallel; output order is unchanged.
pub fn detect_par(
    maps: &GeometryMaps,
    params: &PostprocParams,
) -> Result<Vec<Detection>, PostprocError> {
    params.validate()?;
    let bin = binarize(maps, params.t_tr, params.t_tcl)?;
    let cands = segment_instances(&bin.tcl_mask)
        .into_par_iter()
        .map(|comp| candidate(comp, maps, &bin.tcl_mask))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(filter_candidates(cands, maps, params))
}
