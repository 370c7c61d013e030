//! Overlays for inspection: detection outlines in yellow, ground truth in
//! green, traced center lines in red. A raster version draws one-pixel
//! Bresenham strokes; the SVG version emits the same primitives as vectors.

use std::fmt::Write as _;

use crate::geometry::{Point2, Polygon};
use crate::labelgen::AnnotatedInstance;
use crate::postproc::Detection;
use crate::rectify::RasterImage;

pub const YELLOW: [u8; 3] = [255, 255, 0];
pub const GREEN: [u8; 3] = [0, 255, 0];
pub const RED: [u8; 3] = [255, 0, 0];

fn luma(c: [u8; 3]) -> u8 {
    (0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64).round() as u8
}

/// Integer points of the Bresenham line between two pixels, inclusive.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let (dx, dy) = ((b.0 - x).abs(), -(b.1 - y).abs());
    let (sx, sy) = (if x < b.0 { 1 } else { -1 }, if y < b.1 { 1 } else { -1 });
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == b {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn pixel_of(p: Point2) -> (i64, i64) {
    (p.x.floor() as i64, p.y.floor() as i64)
}

fn stroke(img: &mut RasterImage, pts: &[Point2], closed: bool, color: [u8; 3]) {
    if pts.is_empty() {
        return;
    }
    let n = pts.len();
    let segs = if closed { n } else { n.saturating_sub(1) };
    let mut plot = |(x, y): (i64, i64)| {
        if x < 0 || y < 0 || x >= img.width as i64 || y >= img.height as i64 {
            return;
        }
        let (x, y) = (x as usize, y as usize);
        if img.channels == 1 {
            img.set(x, y, 0, luma(color));
        } else {
            for (ch, &v) in color.iter().enumerate() {
                img.set(x, y, ch, v);
            }
        }
    };
    if segs == 0 {
        plot(pixel_of(pts[0]));
    }
    for i in 0..segs {
        for p in bresenham(pixel_of(pts[i]), pixel_of(pts[(i + 1) % n])) {
            plot(p);
        }
    }
}

/// Draws ground truth, then detection outlines, then detection axes.
pub fn render_overlay(
    img: &RasterImage,
    dets: &[Detection],
    gts: &[AnnotatedInstance],
) -> RasterImage {
    let mut out = img.clone();
    for g in gts {
        stroke(&mut out, g.polygon.vertices(), true, GREEN);
    }
    for d in dets {
        stroke(&mut out, d.boundary.vertices(), true, YELLOW);
    }
    for d in dets {
        stroke(&mut out, &d.snake.centers(), false, RED);
    }
    out
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn points_attr(pts: &[Point2]) -> String {
    pts.iter()
        .map(|p| format!("{},{}", p.x, p.y))
        .collect::<Vec<_>>()
        .join(" ")
}

fn polygon_svg(out: &mut String, p: &Polygon, color: [u8; 3]) {
    let _ = writeln!(
        out,
        r#"  <polygon points="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
        points_attr(p.vertices()),
        hex(color)
    );
}

/// SVG with the same primitives as [`render_overlay`]; `background` is an
/// optional image reference placed underneath.
pub fn render_svg(
    width: usize,
    height: usize,
    background: Option<&str>,
    dets: &[Detection],
    gts: &[AnnotatedInstance],
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    if let Some(href) = background {
        let _ = writeln!(
            s,
            r#"  <image xlink:href="{href}" width="{width}" height="{height}"/>"#
        );
    }
    for g in gts {
        polygon_svg(&mut s, &g.polygon, GREEN);
    }
    for d in dets {
        polygon_svg(&mut s, &d.boundary, YELLOW);
    }
    for d in dets {
        let _ = writeln!(
            s,
            r#"  <polyline points="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
            points_attr(&d.snake.centers()),
            hex(RED)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::segment_distance;
    use crate::labelgen::{generate_labels, Sampling};
    use crate::postproc::{detect, PostprocParams};
    use crate::synth::{synth_snakes, SynthParams};

    fn canvas(channels: usize) -> RasterImage {
        let mut img = RasterImage::filled(128, 96, channels, 0).unwrap();
        for (k, v) in img.samples.iter_mut().enumerate() {
            *v = (k * 13 % 97) as u8;
        }
        img
    }

    fn one_detection() -> (Vec<Detection>, Vec<AnnotatedInstance>) {
        let poly =
            Polygon::from_xy(&[(20.0, 30.0), (100.0, 40.0), (98.0, 60.0), (18.0, 50.0)]).unwrap();
        let inst = vec![AnnotatedInstance::new(poly)];
        let set = generate_labels(&inst, 96, 128, Sampling::default()).unwrap();
        (detect(&set.maps, &PostprocParams::default()).unwrap(), inst)
    }

    #[test]
    fn bresenham_endpoints_and_connectivity() {
        for &(a, b) in &[
            ((0, 0), (7, 3)),
            ((5, 5), (-2, 9)),
            ((3, 3), (3, 3)),
            ((0, 0), (0, -4)),
        ] {
            let line = bresenham(a, b);
            assert_eq!((line[0], *line.last().unwrap()), (a, b));
            assert!(line
                .windows(2)
                .all(|w| (w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1));
        }
    }

    #[test]
    fn empty_overlay_is_identity() {
        for ch in [1, 3] {
            let img = canvas(ch);
            assert_eq!(render_overlay(&img, &[], &[]), img);
        }
    }

    #[test]
    fn changes_only_on_strokes() {
        let (dets, _) = one_detection();
        assert_eq!(dets.len(), 1);
        let img = canvas(3);
        let out = render_overlay(&img, &dets, &[]);
        assert_eq!(
            (out.width, out.height, out.channels),
            (img.width, img.height, 3)
        );
        let d = &dets[0];
        let centers = d.snake.centers();
        let mut changed = 0;
        for y in 0..img.height {
            for x in 0..img.width {
                if (0..3).all(|c| img.get(x, y, c) == out.get(x, y, c)) {
                    continue;
                }
                changed += 1;
                let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                let near_outline = d
                    .boundary
                    .edges()
                    .any(|(a, b)| segment_distance(p, p, a, b) <= 1.5);
                let near_axis = centers
                    .windows(2)
                    .any(|w| segment_distance(p, p, w[0], w[1]) <= 1.5);
                assert!(near_outline || near_axis, "pixel {x},{y}");
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn gray_output_keeps_one_channel() {
        let (dets, gts) = one_detection();
        let out = render_overlay(&canvas(1), &dets, &gts);
        assert_eq!(out.channels, 1);
        assert!(out.samples.contains(&luma(YELLOW)));
    }

    #[test]
    fn round_trip_axes_inside_detections() {
        let p = SynthParams {
            images: 5,
            ..SynthParams::default()
        };
        let (recs, _) = synth_snakes(&p).unwrap();
        for r in &recs {
            let set =
                generate_labels(&r.instances, r.height, r.width, Sampling::default()).unwrap();
            let dets = detect(&set.maps, &PostprocParams::default()).unwrap();
            for d in &dets {
                let c = d.snake.centers();
                let pts: Vec<(i64, i64)> = if c.len() == 1 {
                    vec![pixel_of(c[0])]
                } else {
                    c.windows(2)
                        .flat_map(|w| bresenham(pixel_of(w[0]), pixel_of(w[1])))
                        .collect()
                };
                for (x, y) in pts {
                    assert!(
                        d.region.get(y as usize, x as usize),
                        "{} axis pixel {x},{y}",
                        r.image_id
                    );
                }
            }
        }
    }

    #[test]
    fn svg_lists_all_shapes() {
        let (dets, gts) = one_detection();
        let svg = render_svg(128, 96, Some("bg.png"), &dets, &gts);
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("#ffff00") && svg.contains("#00ff00") && svg.contains("#ff0000"));
    }
}
