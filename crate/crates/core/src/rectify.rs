//! Unwarping of a curved instance into a straight horizontal strip.
//!
//! The output is `round(axis length)` columns by `round(2 * median radius)`
//! rows. Each pair of consecutive disks spans a source quadrilateral between
//! the offset points `c - r n` (top) and `c + r n` (bottom), which is mapped
//! bilinearly onto the output columns whose centers fall in that stretch of
//! the axis.

use std::path::Path;

use thiserror::Error;

use crate::geometry::Point2;
use crate::labelgen::SnakeDescriptor;

#[derive(Debug, Error)]
pub enum RectifyError {
    #[error("degenerate snake: {0}")]
    DegenerateSnake(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image i/o: {0}")]
    Io(#[from] image::ImageError),
}

/// 8-bit raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub samples: Vec<u8>,
}

impl RasterImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<u8>,
    ) -> Result<Self, RectifyError> {
        if channels != 1 && channels != 3 {
            return Err(RectifyError::InvalidImage(format!(
                "{channels} channels, expected 1 or 3"
            )));
        }
        if samples.len() != width * height * channels {
            return Err(RectifyError::InvalidImage(format!(
                "{} samples for {width}x{height}x{channels}",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: u8,
    ) -> Result<Self, RectifyError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> u8 {
        self.samples[(y * self.width + x) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ch: usize, v: u8) {
        self.samples[(y * self.width + x) * self.channels + ch] = v;
    }

    /// Reads a PNG; gray images stay single-channel, everything else becomes RGB.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, RectifyError> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img.color() {
            image::ColorType::L8
            | image::ColorType::La8
            | image::ColorType::L16
            | image::ColorType::La16 => Self::new(w, h, 1, img.into_luma8().into_raw()),
            _ => Self::new(w, h, 3, img.into_rgb8().into_raw()),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RectifyError> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.samples,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }

    /// Bilinear sample at continuous coordinates relative to the integer
    /// offset `(ox, oy)`; pixel centers sit at half-integers and reads beyond
    /// the border are clamped.
    fn sample(&self, ox: i64, oy: i64, p: Point2, ch: usize) -> f64 {
        let (fx, fy) = (p.x - 0.5, p.y - 0.5);
        let (x0, y0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - x0, fy - y0);
        let clamp_x = |x: i64| x.clamp(0, self.width as i64 - 1) as usize;
        let clamp_y = |y: i64| y.clamp(0, self.height as i64 - 1) as usize;
        let (xa, ya) = (ox + x0 as i64, oy + y0 as i64);
        let (c0, c1, r0, r1) = (clamp_x(xa), clamp_x(xa + 1), clamp_y(ya), clamp_y(ya + 1));
        let v = |x: usize, y: usize| self.get(x, y, ch) as f64;
        (1.0 - ty) * ((1.0 - tx) * v(c0, r0) + tx * v(c1, r0))
            + ty * ((1.0 - tx) * v(c0, r1) + tx * v(c1, r1))
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Output size `(width, height)` for a snake.
pub fn rectified_size(snake: &SnakeDescriptor) -> (usize, usize) {
    let radii: Vec<f64> = snake.disks.iter().map(|d| d.radius).collect();
    let w = snake.axis_length().round().max(1.0) as usize;
    let h = (2.0 * median(&radii)).round().max(2.0) as usize;
    (w, h)
}

pub fn rectify_instance(
    img: &RasterImage,
    snake: &SnakeDescriptor,
) -> Result<RasterImage, RectifyError> {
    if snake.disks.len() < 2 {
        return Err(RectifyError::DegenerateSnake(format!(
            "{} disks, need 2",
            snake.disks.len()
        )));
    }
    if img.width == 0 || img.height == 0 {
        return Err(RectifyError::InvalidImage("empty image".into()));
    }
    let mut disks = snake.disks.clone();
    disks.dedup_by(|b, a| a.center == b.center);
    if disks.len() < 2 {
        return Err(RectifyError::DegenerateSnake("all centers coincide".into()));
    }
    if disks
        .iter()
        .any(|d| !d.center.is_finite() || !d.radius.is_finite())
    {
        return Err(RectifyError::DegenerateSnake("non-finite disk".into()));
    }
    let trimmed = SnakeDescriptor::new(disks.clone());
    let (out_w, out_h) = rectified_size(&trimmed);

    // work relative to an integer origin so integer shifts of the input
    // leave every computed coordinate unchanged
    let (ox, oy) = (disks[0].center.x.floor(), disks[0].center.y.floor());
    let origin = Point2::new(ox, oy);
    let c: Vec<Point2> = disks.iter().map(|d| d.center.sub(origin)).collect();
    let m = c.len();
    let normals: Vec<Point2> = (0..m)
        .map(|i| {
            let t = c[(i + 1).min(m - 1)].sub(c[i.saturating_sub(1)]);
            let t = t.scale(1.0 / t.norm());
            Point2::new(-t.y, t.x)
        })
        .collect();
    let top: Vec<Point2> = (0..m)
        .map(|i| c[i].sub(normals[i].scale(disks[i].radius)))
        .collect();
    let bottom: Vec<Point2> = (0..m)
        .map(|i| c[i].add(normals[i].scale(disks[i].radius)))
        .collect();
    let mut cum = vec![0.0; m];
    for i in 1..m {
        cum[i] = cum[i - 1] + c[i].dist(c[i - 1]);
    }
    let total = cum[m - 1];

    let mut out = RasterImage::filled(out_w, out_h, img.channels, 0)?;
    let mut seg = 0;
    for x in 0..out_w {
        let s = (x as f64 + 0.5) / out_w as f64 * total;
        while seg + 2 < m && cum[seg + 1] < s {
            seg += 1;
        }
        let t = ((s - cum[seg]) / (cum[seg + 1] - cum[seg])).clamp(0.0, 1.0);
        let upper = top[seg].lerp(top[seg + 1], t);
        let lower = bottom[seg].lerp(bottom[seg + 1], t);
        for y in 0..out_h {
            let v = (y as f64 + 0.5) / out_h as f64;
            let p = upper.lerp(lower, v);
            for ch in 0..img.channels {
                let val = img.sample(ox as i64, oy as i64, p, ch);
                out.set(x, y, ch, val.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}
