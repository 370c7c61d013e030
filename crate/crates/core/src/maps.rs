//! Per-pixel geometry maps, their binary container and score binarization.
//!
//! A `.tsm` file is laid out as:
//!
//! ```text
//! "TSMAPS01"            8 bytes ASCII magic
//! height, width, 5      3 x u32 little-endian
//! tr, tcl, r, cos, sin  5 planes of height*width f32 little-endian, row-major
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{GeometryError, PixelMask, Point2};

pub const MAGIC: &[u8; 8] = b"TSMAPS01";
pub const CHANNELS: u32 = 5;
const MAX_PIXELS: u64 = 1 << 31;

#[derive(Debug, Error)]
pub enum MapsError {
    #[error("i/o error at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: io::Error,
    },
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 8]),
    #[error("expected {CHANNELS} channels, found {0}")]
    BadChannelCount(u32),
    #[error("map dimensions {height}x{width} exceed 2^31 pixels or are zero")]
    DimensionOverflow { height: u64, width: u64 },
    #[error("channel {name} has {got} values, expected {expected}")]
    ChannelLength {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("threshold {0} outside (0, 1)")]
    ThresholdOutOfRange(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Five co-registered channels over a `height x width` grid: text-region
/// and center-line probabilities, radius in pixels, and the cosine and sine
/// of the local orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryMaps {
    height: usize,
    width: usize,
    tr: Vec<f32>,
    tcl: Vec<f32>,
    r: Vec<f32>,
    cos_t: Vec<f32>,
    sin_t: Vec<f32>,
}

fn check_dims(height: usize, width: usize) -> Result<usize, MapsError> {
    let n = height as u64 * width as u64;
    if height == 0 || width == 0 || n > MAX_PIXELS {
        return Err(MapsError::DimensionOverflow {
            height: height as u64,
            width: width as u64,
        });
    }
    Ok(n as usize)
}

impl GeometryMaps {
    pub fn zeros(height: usize, width: usize) -> Result<Self, MapsError> {
        let n = check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            tr: vec![0.0; n],
            tcl: vec![0.0; n],
            r: vec![0.0; n],
            cos_t: vec![0.0; n],
            sin_t: vec![0.0; n],
        })
    }

    pub fn from_channels(
        height: usize,
        width: usize,
        tr: Vec<f32>,
        tcl: Vec<f32>,
        r: Vec<f32>,
        cos_t: Vec<f32>,
        sin_t: Vec<f32>,
    ) -> Result<Self, MapsError> {
        let n = check_dims(height, width)?;
        for (name, ch) in [
            ("tr", &tr),
            ("tcl", &tcl),
            ("r", &r),
            ("cos", &cos_t),
            ("sin", &sin_t),
        ] {
            if ch.len() != n {
                return Err(MapsError::ChannelLength {
                    name,
                    got: ch.len(),
                    expected: n,
                });
            }
        }
        Ok(Self {
            height,
            width,
            tr,
            tcl,
            r,
            cos_t,
            sin_t,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tr(&self) -> &[f32] {
        &self.tr
    }
    pub fn tcl(&self) -> &[f32] {
        &self.tcl
    }
    pub fn r(&self) -> &[f32] {
        &self.r
    }
    pub fn cos_t(&self) -> &[f32] {
        &self.cos_t
    }
    pub fn sin_t(&self) -> &[f32] {
        &self.sin_t
    }

    pub fn tr_mut(&mut self) -> &mut [f32] {
        &mut self.tr
    }
    pub fn tcl_mut(&mut self) -> &mut [f32] {
        &mut self.tcl
    }
    pub fn r_mut(&mut self) -> &mut [f32] {
        &mut self.r
    }
    pub fn cos_t_mut(&mut self) -> &mut [f32] {
        &mut self.cos_t
    }
    pub fn sin_t_mut(&mut self) -> &mut [f32] {
        &mut self.sin_t
    }

    fn planes(&self) -> [&[f32]; 5] {
        [&self.tr, &self.tcl, &self.r, &self.cos_t, &self.sin_t]
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Pixel containing `p`, if inside the grid.
    #[inline]
    pub fn pixel_at(&self, p: Point2) -> Option<(usize, usize)> {
        let (x, y) = (p.x.floor(), p.y.floor());
        if x < 0.0
            || y < 0.0
            || x >= self.width as f64
            || y >= self.height as f64
            || x.is_nan()
            || y.is_nan()
        {
            return None;
        }
        Some((y as usize, x as usize))
    }

    /// Radius and unit orientation `(cos, sin)` at a pixel. The orientation is
    /// re-normalized; near-zero vectors read as angle 0.
    pub fn geometry_at(&self, row: usize, col: usize) -> (f64, f64, f64) {
        let i = self.index(row, col);
        let (c, s) = (self.cos_t[i] as f64, self.sin_t[i] as f64);
        let n = c.hypot(s);
        let r = self.r[i] as f64;
        if n < 1e-6 {
            (r, 1.0, 0.0)
        } else {
            (r, c / n, s / n)
        }
    }
}

/// Thresholded text-region and center-line masks; the center-line mask is
/// already restricted to the text region.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedMaps {
    pub tr_mask: PixelMask,
    pub tcl_mask: PixelMask,
}

pub fn binarize(maps: &GeometryMaps, t_tr: f64, t_tcl: f64) -> Result<BinarizedMaps, MapsError> {
    for t in [t_tr, t_tcl] {
        if !(t > 0.0 && t < 1.0) {
            return Err(MapsError::ThresholdOutOfRange(t));
        }
    }
    let (h, w) = (maps.height, maps.width);
    let mut tr_mask = PixelMask::new(h, w)?;
    let mut tcl_mask = PixelMask::new(h, w)?;
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if maps.tr[i] as f64 >= t_tr {
                tr_mask.set(row, col, true);
                if maps.tcl[i] as f64 >= t_tcl {
                    tcl_mask.set(row, col, true);
                }
            }
        }
    }
    Ok(BinarizedMaps { tr_mask, tcl_mask })
}

pub fn write_maps<W: Write>(maps: &GeometryMaps, mut out: W) -> io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(maps.height as u32).to_le_bytes())?;
    out.write_all(&(maps.width as u32).to_le_bytes())?;
    out.write_all(&CHANNELS.to_le_bytes())?;
    let mut buf = Vec::with_capacity(maps.len() * 4);
    for plane in maps.planes() {
        buf.clear();
        for v in plane {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<(), MapsError> {
        let mut done = 0;
        while done < buf.len() {
            match self.inner.read(&mut buf[done..]) {
                Ok(0) => {
                    return Err(MapsError::Io {
                        offset: self.offset + done as u64,
                        source: io::Error::new(io::ErrorKind::UnexpectedEof, "truncated map file"),
                    })
                }
                Ok(k) => done += k,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    return Err(MapsError::Io {
                        offset: self.offset + done as u64,
                        source: e,
                    })
                }
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, MapsError> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
}

pub fn read_maps<R: Read>(input: R) -> Result<GeometryMaps, MapsError> {
    let mut cur = Cursor {
        inner: input,
        offset: 0,
    };
    let mut magic = [0u8; 8];
    cur.fill(&mut magic)?;
    if &magic != MAGIC {
        return Err(MapsError::BadMagic(magic));
    }
    let height = cur.u32()? as usize;
    let width = cur.u32()? as usize;
    let channels = cur.u32()?;
    if channels != CHANNELS {
        return Err(MapsError::BadChannelCount(channels));
    }
    let n = check_dims(height, width)?;
    let mut bytes = vec![0u8; n * 4];
    let mut plane = || -> Result<Vec<f32>, MapsError> {
        cur.fill(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    let tr = plane()?;
    let tcl = plane()?;
    let r = plane()?;
    let cos_t = plane()?;
    let sin_t = plane()?;
    GeometryMaps::from_channels(height, width, tr, tcl, r, cos_t, sin_t)
}

pub fn save_maps(maps: &GeometryMaps, path: impl AsRef<Path>) -> Result<(), MapsError> {
    let f = File::create(path).map_err(|source| MapsError::Io { offset: 0, source })?;
    write_maps(maps, BufWriter::new(f)).map_err(|source| MapsError::Io { offset: 0, source })
}

pub fn load_maps(path: impl AsRef<Path>) -> Result<GeometryMaps, MapsError> {
    let f = File::open(path).map_err(|source| MapsError::Io { offset: 0, source })?;
    read_maps(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_maps(h: usize, w: usize, seed: u64) -> GeometryMaps {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut ch = || (0..h * w).map(|_| rng.gen::<f32>()).collect::<Vec<_>>();
        GeometryMaps::from_channels(h, w, ch(), ch(), ch(), ch(), ch()).unwrap()
    }

    fn single_pixel(tr: f32, tcl: f32) -> GeometryMaps {
        GeometryMaps::from_channels(1, 1, vec![tr], vec![tcl], vec![0.0], vec![1.0], vec![0.0])
            .unwrap()
    }

    #[test]
    fn binarize_default_thresholds() {
        let b = binarize(&single_pixel(0.5, 0.7), 0.4, 0.6).unwrap();
        assert!(b.tr_mask.get(0, 0) && b.tcl_mask.get(0, 0));
    }

    #[test]
    fn binarize_masks_tcl_by_tr() {
        let b = binarize(&single_pixel(0.1, 0.99), 0.4, 0.6).unwrap();
        assert!(!b.tr_mask.get(0, 0) && !b.tcl_mask.get(0, 0));
    }

    #[test]
    fn binarize_zero_maps_and_bad_thresholds() {
        let m = GeometryMaps::zeros(8, 9).unwrap();
        let b = binarize(&m, 0.4, 0.6).unwrap();
        assert!(b.tr_mask.is_empty() && b.tcl_mask.is_empty());
        assert!(matches!(
            binarize(&m, 0.0, 0.5),
            Err(MapsError::ThresholdOutOfRange(_))
        ));
        assert!(matches!(
            binarize(&m, 0.5, 1.0),
            Err(MapsError::ThresholdOutOfRange(_))
        ));
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = random_maps(64, 64, 1);
        let mut bytes = Vec::new();
        write_maps(&m, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 20 + 5 * 64 * 64 * 4);
        let back = read_maps(bytes.as_slice()).unwrap();
        for (a, b) in m.planes().iter().zip(back.planes()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let mut again = Vec::new();
        write_maps(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn header_layout() {
        let m = GeometryMaps::zeros(3, 7).unwrap();
        let mut bytes = Vec::new();
        write_maps(&m, &mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"TSMAPS01");
        assert_eq!(&bytes[8..20], &[3, 0, 0, 0, 7, 0, 0, 0, 5, 0, 0, 0]);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = Vec::new();
        write_maps(&GeometryMaps::zeros(2, 2).unwrap(), &mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            read_maps(bytes.as_slice()),
            Err(MapsError::BadMagic(_))
        ));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let mut bytes = Vec::new();
        write_maps(&GeometryMaps::zeros(4, 4).unwrap(), &mut bytes).unwrap();
        bytes.truncate(50);
        match read_maps(bytes.as_slice()) {
            Err(MapsError::Io { offset, .. }) => assert_eq!(offset, 50),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oversized_header_rejected() {
        let mut bytes = MAGIC.to_vec();
        for v in [70_000u32, 70_000, 5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            read_maps(bytes.as_slice()),
            Err(MapsError::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsm");
        let m = random_maps(5, 11, 3);
        save_maps(&m, &path).unwrap();
        assert_eq!(load_maps(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn raising_tcl_threshold_never_adds(seed in 0u64..1000, t1 in 0.01f64..0.99, dt in 0.0f64..0.5) {
            let m = random_maps(6, 6, seed);
            let t2 = (t1 + dt).min(0.99);
            let lo = binarize(&m, 0.3, t1).unwrap();
            let hi = binarize(&m, 0.3, t2).unwrap();
            prop_assert!(hi.tcl_mask.is_subset_of(&lo.tcl_mask).unwrap());
            prop_assert!(lo.tcl_mask.is_subset_of(&lo.tr_mask).unwrap());
        }
    }
}
