//! `textsnake` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 malformed input,
//! 3 internal invariant violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use textsnake::annotations::{parse_polyjson, to_jsonl, AnnotationRecord};
use textsnake::bench::{format_table, run_bench, BenchError};
use textsnake::evalkit::{score_image, ScoreReport};
use textsnake::geometry::Polygon;
use textsnake::labelgen::{generate_labels, Sampling};
use textsnake::maps::{load_maps, save_maps, MapsError};
use textsnake::pipeline::{roundtrip_image, summarize};
use textsnake::postproc::{detect, Detection, PostprocParams};
use textsnake::records::{parse_detections, DetectionRecord};
use textsnake::rectify::{rectify_instance, RasterImage, RectifyError};
use textsnake::render::{render_overlay, render_svg};
use textsnake::synth::{oracle_to_jsonl, synth_snakes, SynthParams};

#[derive(Parser)]
#[command(
    name = "textsnake",
    version,
    about = "TextSnake geometry: labels, reconstruction, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic snake annotations and their axis oracle.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        images: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Write one TSM1 map file per annotated image.
    GenLabels {
        #[arg(long)]
        ann: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Reconstruct instances from every `.tsm` file in a directory.
    Reconstruct {
        #[arg(long)]
        maps: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        t_tr: f64,
        #[arg(long, default_value_t = 0.6)]
        t_tcl: f64,
        #[arg(long)]
        icdar_filters: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Labels then reconstruction, scored against the annotations.
    Roundtrip {
        #[arg(long)]
        ann: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also write the detections as JSON lines.
        #[arg(long)]
        det: Option<PathBuf>,
    },
    /// Score detections against ground truth.
    Eval {
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Draw detections and ground truth over an image (PNG, or SVG by extension).
    Render {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Unwarp each detection of an image into a horizontal strip.
    Rectify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Time the hot paths.
    Bench {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Parse(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Parse(m) | CliError::Internal(m) => m,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let parsed = parse_polyjson(&read(path)?)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    Ok(parsed.records)
}

fn load_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    parse_detections(&read(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn maps_error(path: &Path, e: MapsError) -> CliError {
    match e {
        MapsError::Io { ref source, .. } if source.kind() != std::io::ErrorKind::UnexpectedEof => {
            CliError::Usage(format!("{}: {e}", path.display()))
        }
        e => CliError::Parse(format!("{}: {e}", path.display())),
    }
}

fn image_error(path: &Path, e: RectifyError) -> CliError {
    match e {
        RectifyError::Io(_) => CliError::Usage(format!("{}: {e}", path.display())),
        e => CliError::Parse(format!("{}: {e}", path.display())),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// The detection record for `image`: the one with a matching name, or the
/// only one in the file.
fn pick_record(records: Vec<DetectionRecord>, image: &Path) -> Result<DetectionRecord> {
    let name = stem(image);
    let n = records.len();
    let mut it = records.into_iter();
    if n == 1 {
        return Ok(it.next().expect("one record"));
    }
    it.find(|r| r.image == name)
        .ok_or_else(|| CliError::Usage(format!("no detection record for image {name:?}")))
}

fn rebuild(rec: &DetectionRecord) -> Result<Vec<Detection>> {
    rec.detections()
        .map_err(|e| CliError::Parse(format!("{}: {e}", rec.image)))
}

fn check_size(rec: &DetectionRecord, img: &RasterImage) -> Result<()> {
    if rec.size != [img.height, img.width] {
        return Err(CliError::Usage(format!(
            "record {} is {}x{} but the image is {}x{}",
            rec.image, rec.size[0], rec.size[1], img.height, img.width
        )));
    }
    Ok(())
}

fn cmd_synth(seed: u64, images: usize, out: &Path, oracle: Option<&Path>) -> Result<()> {
    let params = SynthParams {
        seed,
        images,
        ..SynthParams::default()
    };
    let (recs, truth) = synth_snakes(&params).map_err(|e| CliError::Usage(e.to_string()))?;
    write(out, to_jsonl(&recs))?;
    if let Some(path) = oracle {
        write(path, oracle_to_jsonl(&truth))?;
    }
    log::info!("wrote {} images", recs.len());
    Ok(())
}

fn cmd_gen_labels(ann: &Path, out_dir: &Path) -> Result<()> {
    let recs = load_annotations(ann)?;
    create_dir(out_dir)?;
    recs.par_iter().try_for_each(|r| {
        let set = generate_labels(&r.instances, r.height, r.width, Sampling::default())
            .map_err(|e| CliError::Parse(format!("{}: {e}", r.image_id)))?;
        let path = out_dir.join(format!("{}.tsm", r.image_id));
        save_maps(&set.maps, &path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    })?;
    log::info!("wrote {} map files to {}", recs.len(), out_dir.display());
    Ok(())
}

fn cmd_reconstruct(dir: &Path, params: &PostprocParams, out: &Path) -> Result<()> {
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsm"))
        .collect();
    files.sort();
    let lines: Vec<String> = files
        .par_iter()
        .map(|path| {
            let maps = load_maps(path).map_err(|e| maps_error(path, e))?;
            let dets = detect(&maps, params)
                .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
            Ok(
                DetectionRecord::new(&stem(path), maps.height(), maps.width(), &dets)
                    .to_json_line()
                    + "\n",
            )
        })
        .collect::<Result<_>>()?;
    write(out, lines.concat())?;
    log::info!("reconstructed {} map files", files.len());
    Ok(())
}

fn cmd_roundtrip(ann: &Path, report: &Path, det: Option<&Path>) -> Result<()> {
    let recs = load_annotations(ann)?;
    let params = PostprocParams::default();
    let results: Vec<_> = recs
        .par_iter()
        .map(|r| roundtrip_image(r, &params).map_err(|e| CliError::Internal(e.to_string())))
        .collect::<Result<_>>()?;
    if let Some(path) = det {
        let lines: String = recs
            .iter()
            .zip(&results)
            .map(|(r, (_, dets))| {
                DetectionRecord::new(&r.image_id, r.height, r.width, dets).to_json_line() + "\n"
            })
            .collect();
        write(path, lines)?;
    }
    let summary = summarize(results.into_iter().map(|(img, _)| img).collect());
    log::info!(
        "{} images, {:.1}% count match, {:.1}% of instances with IoU >= {}",
        summary.images,
        100.0 * summary.count_match_fraction(),
        100.0 * summary.faithful_fraction(),
        summary.faithful_iou
    );
    write(report, to_json(&summary))
}

fn cmd_eval(det: &Path, gt: &Path, iou: f64, report: &Path) -> Result<()> {
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(CliError::Usage(format!("--iou {iou} outside (0, 1]")));
    }
    let gts = load_annotations(gt)?;
    let dets = load_detections(det)?;
    for d in &dets {
        if !gts.iter().any(|g| g.image_id == d.image) {
            return Err(CliError::Parse(format!(
                "detections for unknown image {:?}",
                d.image
            )));
        }
    }
    let per_image = gts
        .iter()
        .map(|g| {
            let polys: Vec<Polygon> = dets
                .iter()
                .filter(|d| d.image == g.image_id)
                .flat_map(|d| d.detections.iter())
                .map(|d| d.to_detection(g.height, g.width).map(|x| x.boundary))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CliError::Parse(format!("{}: {e}", g.image_id)))?;
            score_image(&polys, &g.instances, g.height, g.width, iou)
                .map_err(|e| CliError::Internal(format!("{}: {e}", g.image_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let rep = ScoreReport::aggregate(per_image);
    println!(
        "P {:.4}  R {:.4}  F {:.4}  (tp {}, fp {}, fn {})",
        rep.precision, rep.recall, rep.f_measure, rep.tp, rep.fp, rep.fn_
    );
    write(report, to_json(&rep))
}

fn cmd_render(image: &Path, det: &Path, gt: Option<&Path>, out: &Path) -> Result<()> {
    let img = RasterImage::load_png(image).map_err(|e| image_error(image, e))?;
    let rec = pick_record(load_detections(det)?, image)?;
    check_size(&rec, &img)?;
    let dets = rebuild(&rec)?;
    let gts = match gt {
        Some(path) => load_annotations(path)?
            .into_iter()
            .find(|g| g.image_id == rec.image)
            .map(|g| g.instances)
            .unwrap_or_default(),
        None => Vec::new(),
    };
    if out.extension().is_some_and(|x| x == "svg") {
        let href = image.to_string_lossy();
        write(
            out,
            render_svg(img.width, img.height, Some(&href), &dets, &gts),
        )
    } else {
        render_overlay(&img, &dets, &gts)
            .save_png(out)
            .map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))
    }
}

fn cmd_rectify(image: &Path, det: &Path, out_dir: &Path) -> Result<()> {
    let img = RasterImage::load_png(image).map_err(|e| image_error(image, e))?;
    let rec = pick_record(load_detections(det)?, image)?;
    check_size(&rec, &img)?;
    create_dir(out_dir)?;
    for (k, d) in rebuild(&rec)?.iter().enumerate() {
        let strip = match rectify_instance(&img, &d.snake) {
            Ok(s) => s,
            Err(RectifyError::DegenerateSnake(msg)) => {
                log::warn!("{} detection {k}: {msg}", rec.image);
                continue;
            }
            Err(e) => return Err(CliError::Internal(e.to_string())),
        };
        let path = out_dir.join(format!("{}_{k:03}.png", rec.image));
        strip
            .save_png(&path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_bench(suite: &str, reps: usize, out: Option<&Path>, parallel: bool) -> Result<()> {
    let reports = run_bench(suite, reps, parallel).map_err(|e| match e {
        BenchError::ChecksumMismatch { .. } | BenchError::Setup(_) => {
            CliError::Internal(e.to_string())
        }
        e => CliError::Usage(e.to_string()),
    })?;
    print!("{}", format_table(&reports));
    match out {
        Some(path) => write(path, to_json(&reports)),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            seed,
            images,
            out,
            oracle,
        } => cmd_synth(seed, images, &out, oracle.as_deref()),
        Command::GenLabels { ann, out_dir } => cmd_gen_labels(&ann, &out_dir),
        Command::Reconstruct {
            maps,
            t_tr,
            t_tcl,
            icdar_filters,
            out,
        } => {
            let base = if icdar_filters {
                PostprocParams::icdar()
            } else {
                PostprocParams::default()
            };
            cmd_reconstruct(
                &maps,
                &PostprocParams {
                    t_tr,
                    t_tcl,
                    ..base
                },
                &out,
            )
        }
        Command::Roundtrip { ann, report, det } => cmd_roundtrip(&ann, &report, det.as_deref()),
        Command::Eval {
            det,
            gt,
            iou,
            report,
        } => cmd_eval(&det, &gt, iou, &report),
        Command::Render {
            image,
            det,
            gt,
            out,
        } => cmd_render(&image, &det, gt.as_deref(), &out),
        Command::Rectify {
            image,
            det,
            out_dir,
        } => cmd_rectify(&image, &det, &out_dir),
        Command::Bench {
            suite,
            reps,
            out,
            parallel,
        } => cmd_bench(&suite, reps, out.as_deref(), parallel),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
