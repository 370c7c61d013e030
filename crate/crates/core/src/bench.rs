//! Timing harness for the hot paths: polygon rasterization, center-line
//! segmentation and axis tracing.
//!
//! Inputs are generated from fixed seeds. Before timing, each case checks
//! its result against a frozen checksum, so a benchmark never measures code
//! that computes something different from what the tests accept.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PixelMask, Polygon};
use crate::labelgen::{generate_labels, Sampling};
use crate::maps::GeometryMaps;
use crate::postproc::{
    detect, detect_par, segment_instances, Detection, PostprocParams, TclComponent,
};
use crate::synth::{synth_snakes, SynthParams};

pub const MIN_REPS: usize = 5;
pub const CASES: [&str; 3] = ["segment-1024", "rasterize-512", "trace-512"];

/// Result checksums of the three cases, in [`CASES`] order.
pub const EXPECTED_CHECKSUMS: [u64; 3] =
    [0xf4057d7611eaa5e1, 0x54df6cf349a6f611, 0xf594b13aa006beb0];

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("unknown case {0:?}; known: {known}", known = CASES.join(", "))]
    UnknownCase(String),
    #[error("{0} repetitions requested, need at least {MIN_REPS}")]
    TooFewReps(usize),
    #[error("checksum mismatch in {case}: got {got:016x}, expected {expected:016x}")]
    ChecksumMismatch {
        case: String,
        got: u64,
        expected: u64,
    },
    #[error("input generation failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub case: String,
    pub pixels: u64,
    pub instances: u64,
    pub reps: usize,
    pub parallel: bool,
    pub median_seconds: f64,
    pub pixels_per_second: f64,
    pub checksum: String,
}

/// 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub fn bytes(&mut self, data: &[u8]) {
        for &b in data {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

pub fn checksum_components(comps: &[TclComponent]) -> u64 {
    let mut h = Fnv::default();
    h.u64(comps.len() as u64);
    for c in comps {
        h.u64(c.pixels.len() as u64);
        h.u64(c.pixels[0].0 as u64);
        h.u64(c.pixels[0].1 as u64);
    }
    h.finish()
}

pub fn checksum_masks(masks: &[PixelMask]) -> u64 {
    let mut h = Fnv::default();
    for m in masks {
        for &w in m.words() {
            h.u64(w);
        }
    }
    h.finish()
}

pub fn checksum_detections(dets: &[Vec<Detection>]) -> u64 {
    let mut h = Fnv::default();
    for image in dets {
        h.u64(image.len() as u64);
        for d in image {
            for k in &d.snake.disks {
                for v in [k.center.x, k.center.y, k.radius, k.theta] {
                    h.u64(v.to_bits());
                }
            }
        }
    }
    h.finish()
}

/// Seeded 1024 x 1024 mask of density 0.35.
pub fn segment_input() -> PixelMask {
    let mut rng = ChaCha8Rng::seed_from_u64(1024);
    PixelMask::from_fn(1024, 1024, |_, _| rng.gen_bool(0.35)).expect("nonzero size")
}

/// Polygons of the first eight seed-42 synthetic images, four per image.
pub fn rasterize_input() -> Result<Vec<Polygon>, BenchError> {
    let p = SynthParams {
        images: 8,
        count: (4, 4),
        ..SynthParams::default()
    };
    let (recs, _) = synth_snakes(&p).map_err(|e| BenchError::Setup(e.to_string()))?;
    Ok(recs
        .into_iter()
        .flat_map(|r| r.instances.into_iter().map(|i| i.polygon))
        .collect())
}

/// Ground-truth maps of the first four seed-42 synthetic images.
pub fn trace_input() -> Result<Vec<GeometryMaps>, BenchError> {
    let p = SynthParams {
        images: 4,
        count: (4, 4),
        ..SynthParams::default()
    };
    let (recs, _) = synth_snakes(&p).map_err(|e| BenchError::Setup(e.to_string()))?;
    recs.iter()
        .map(|r| {
            generate_labels(&r.instances, r.height, r.width, Sampling::default())
                .map(|s| s.maps)
                .map_err(|e| BenchError::Setup(e.to_string()))
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `f` once untimed, then `reps` timed times; returns the median.
fn time<T>(reps: usize, mut f: impl FnMut() -> T) -> f64 {
    std::hint::black_box(f());
    let times = (0..reps)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed().as_secs_f64()
        })
        .collect();
    median(times)
}

fn verify(case: &str, got: u64) -> Result<(), BenchError> {
    let expected = EXPECTED_CHECKSUMS[CASES.iter().position(|c| *c == case).expect("known case")];
    if got != expected {
        return Err(BenchError::ChecksumMismatch {
            case: case.to_string(),
            got,
            expected,
        });
    }
    Ok(())
}

fn run_case(case: &str, reps: usize, parallel: bool) -> Result<BenchReport, BenchError> {
    let (pixels, instances, checksum, secs) = match case {
        "segment-1024" => {
            let mask = segment_input();
            let comps = segment_instances(&mask);
            let sum = checksum_components(&comps);
            verify(case, sum)?;
            let secs = time(reps, || segment_instances(&mask));
            ((1024 * 1024) as u64, comps.len() as u64, sum, secs)
        }
        "rasterize-512" => {
            let polys = rasterize_input()?;
            let run = || -> Vec<PixelMask> {
                if parallel {
                    polys
                        .par_iter()
                        .map(|p| p.rasterize(512, 512).expect("valid polygon"))
                        .collect()
                } else {
                    polys
                        .iter()
                        .map(|p| p.rasterize(512, 512).expect("valid polygon"))
                        .collect()
                }
            };
            let sum = checksum_masks(&run());
            verify(case, sum)?;
            let secs = time(reps, run);
            (
                (512 * 512 * polys.len()) as u64,
                polys.len() as u64,
                sum,
                secs,
            )
        }
        "trace-512" => {
            let maps = trace_input()?;
            let params = PostprocParams::default();
            let run = || -> Vec<Vec<Detection>> {
                maps.iter()
                    .map(|m| {
                        if parallel {
                            detect_par(m, &params)
                        } else {
                            detect(m, &params)
                        }
                        .expect("valid maps")
                    })
                    .collect()
            };
            let dets = run();
            let sum = checksum_detections(&dets);
            verify(case, sum)?;
            let secs = time(reps, run);
            let n: usize = dets.iter().map(Vec::len).sum();
            ((512 * 512 * maps.len()) as u64, n as u64, sum, secs)
        }
        other => return Err(BenchError::UnknownCase(other.to_string())),
    };
    Ok(BenchReport {
        case: case.to_string(),
        pixels,
        instances,
        reps,
        parallel,
        median_seconds: secs,
        pixels_per_second: pixels as f64 / secs.max(1e-12),
        checksum: format!("{checksum:016x}"),
    })
}

/// Runs one case by name, or every case for `"all"`.
pub fn run_bench(suite: &str, reps: usize, parallel: bool) -> Result<Vec<BenchReport>, BenchError> {
    let cases: Vec<&str> = if suite == "all" {
        CASES.to_vec()
    } else if CASES.contains(&suite) {
        vec![suite]
    } else {
        return Err(BenchError::UnknownCase(suite.to_string()));
    };
    if reps < MIN_REPS {
        return Err(BenchError::TooFewReps(reps));
    }
    cases
        .into_iter()
        .map(|c| run_case(c, reps, parallel))
        .collect()
}

pub fn format_table(reports: &[BenchReport]) -> String {
    let mut s = format!(
        "{:<15} {:>12} {:>9} {:>5} {:>12} {:>14}  {}\n",
        "case", "pixels", "instances", "reps", "median ms", "Mpx/s", "checksum"
    );
    for r in reports {
        s += &format!(
            "{:<15} {:>12} {:>9} {:>5} {:>12.3} {:>14.2}  {}\n",
            r.case,
            r.pixels,
            r.instances,
            r.reps,
            r.median_seconds * 1e3,
            r.pixels_per_second / 1e6,
            r.checksum
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        let hash = |s: &str| {
            let mut h = Fnv::default();
            h.bytes(s.as_bytes());
            h.finish()
        };
        assert_eq!(hash(""), 0xcbf29ce484222325);
        assert_eq!(hash("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(hash("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn functional_checksums_match_frozen_values() {
        let comps = segment_instances(&segment_input());
        assert_eq!(checksum_components(&comps), EXPECTED_CHECKSUMS[0]);
        let masks: Vec<PixelMask> = rasterize_input()
            .unwrap()
            .iter()
            .map(|p| p.rasterize(512, 512).unwrap())
            .collect();
        assert_eq!(checksum_masks(&masks), EXPECTED_CHECKSUMS[1]);
        let dets: Vec<Vec<Detection>> = trace_input()
            .unwrap()
            .iter()
            .map(|m| detect(m, &PostprocParams::default()).unwrap())
            .collect();
        assert_eq!(checksum_detections(&dets), EXPECTED_CHECKSUMS[2]);
    }

    #[test]
    fn rejects_bad_requests() {
        assert_eq!(
            run_bench("segment-1024", 3, false),
            Err(BenchError::TooFewReps(3))
        );
        assert_eq!(
            run_bench("nope", 5, false),
            Err(BenchError::UnknownCase("nope".into()))
        );
    }

    #[test]
    fn segment_case_reports_throughput() {
        let a = run_bench("segment-1024", 5, false).unwrap();
        assert_eq!(a.len(), 1);
        assert!(a[0].pixels_per_second > 0.0);
        let b = run_bench("segment-1024", 5, false).unwrap();
        assert_eq!(
            (&a[0].case, &a[0].checksum, a[0].pixels),
            (&b[0].case, &b[0].checksum, b[0].pixels)
        );
    }

    #[test]
    fn parallel_variants_agree() {
        let maps = trace_input().unwrap();
        for m in &maps {
            let p = PostprocParams::default();
            let (a, b) = (detect(m, &p).unwrap(), detect_par(m, &p).unwrap());
            assert_eq!(checksum_detections(&[a]), checksum_detections(&[b]));
        }
    }
}
