//! `fishtrack`: simulate scenes, track detections, evaluate, and trace
//! query merging decisions from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use fishtrack_core::io::{
    frames_to_records, outputs_to_records, parse_mot, parse_scene_config, read_report,
    records_to_frames, records_to_trajectories, trajectories_to_records, write_mot, write_report,
    MotRecord,
};
use fishtrack_core::metrics::{aggregate, evaluate, EvalConfig, MotpConvention};
use fishtrack_core::pipeline::track_frames;
use fishtrack_core::qtsi::{qtsi_merge, DecisionSource, QtsiConfig, Query, QueryRef};
use fishtrack_core::simulator::{simulate, SceneConfig};
use fishtrack_core::{BoundingBox, TrackId, TrackerConfig};

#[derive(Parser, Debug)]
#[command(name = "fishtrack", version, about = "Multi-fish tracking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene: ground truth and noisy detections.
    Simulate {
        /// Scene configuration (TOML). Built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground-truth output (MOT text).
        #[arg(long)]
        out_gt: PathBuf,
        /// Detection output (MOT text, id -1).
        #[arg(long)]
        out_det: PathBuf,
        /// Overrides the seed from the configuration [default: config seed, else 0].
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the online tracker over a detection file.
    Track {
        /// Detections (MOT text).
        #[arg(long)]
        det: PathBuf,
        /// Track output (MOT text).
        #[arg(long)]
        out: PathBuf,
        /// Minimum IOU for a detection to continue a track.
        #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
        iou_thresh: f64,
        /// Consecutive missed frames a track survives.
        #[arg(long, default_value_t = 100)]
        miss_tolerance: u32,
        /// Detections below this confidence are ignored.
        #[arg(long, default_value_t = 0.1, value_parser = unit_interval)]
        min_conf: f64,
        /// Also write boxes of tracks coasting through a miss [default: off].
        #[arg(long)]
        include_coasting: bool,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Ground truth (MOT text).
        #[arg(long)]
        gt: PathBuf,
        /// Predictions (MOT text).
        #[arg(long)]
        pred: PathBuf,
        /// Minimum IOU for a match.
        #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
        iou_thresh: f64,
        /// JSON report path. Printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Quantity MOTP averages over matches.
        #[arg(long, value_enum, default_value_t = Convention::Distance)]
        motp_convention: Convention,
    },
    /// Log the per-box query merging decisions, frame by frame.
    QtsiTrace {
        /// Detect queries (MOT text).
        #[arg(long)]
        det: PathBuf,
        /// Track queries (MOT text, positive ids).
        #[arg(long)]
        track: PathBuf,
        /// Real boxes (MOT text).
        #[arg(long)]
        gt: PathBuf,
        /// Strict IOU threshold a query must exceed.
        #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
        phi: f64,
        /// Score bonus for detect queries.
        #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
        tie_margin: f64,
        /// Trace output path. Printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pool several JSON reports into one.
    Report {
        /// Reports to pool.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Convention {
    /// 1 - IOU, lower is better.
    Distance,
    /// IOU, higher is better.
    Overlap,
}

impl From<Convention> for MotpConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Distance => MotpConvention::Distance,
            Convention::Overlap => MotpConvention::Overlap,
        }
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and non-negative"))
    }
}

/// A failure tied to input data or the filesystem.
struct DataError(String);

type Outcome = Result<(), DataError>;

fn fail(flag: &str, path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError(format!("{flag} {}: {e}", path.display()))
}

fn read_text(flag: &str, path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| fail(flag, path, e))
}

fn read_records(flag: &str, path: &Path) -> Result<Vec<MotRecord>, DataError> {
    parse_mot(&read_text(flag, path)?).map_err(|e| fail(flag, path, e))
}

fn write_text(flag: &str, path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| fail(flag, path, e))
}

fn emit(flag: &str, path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => write_text(flag, p, text),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                Err(DataError(format!("stdout: {e}")))
            }
            _ => Ok(()),
        },
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Simulate {
            config,
            out_gt,
            out_det,
            seed,
        } => {
            let mut scene = match &config {
                Some(p) => parse_scene_config(&read_text("--config", p)?)
                    .map_err(|e| fail("--config", p, e))?,
                None => SceneConfig::default(),
            };
            if let Some(seed) = seed {
                scene.seed = seed;
            }
            let out = simulate(&scene).map_err(|e| DataError(format!("scene: {e}")))?;
            write_text(
                "--out-gt",
                &out_gt,
                &write_mot(&trajectories_to_records(&out.gt)),
            )?;
            write_text(
                "--out-det",
                &out_det,
                &write_mot(&frames_to_records(&out.detections)),
            )
        }
        Command::Track {
            det,
            out,
            iou_thresh,
            miss_tolerance,
            min_conf,
            include_coasting,
        } => {
            let frames = records_to_frames(&read_records("--det", &det)?);
            let config = TrackerConfig {
                iou_match_threshold: iou_thresh,
                miss_tolerance,
                min_confidence: min_conf,
            };
            let outputs = track_frames(&frames, config).map_err(|e| fail("--det", &det, e))?;
            write_text(
                "--out",
                &out,
                &write_mot(&outputs_to_records(&outputs, include_coasting)),
            )
        }
        Command::Eval {
            gt,
            pred,
            iou_thresh,
            report,
            motp_convention,
        } => {
            let gt_tracks = records_to_trajectories(&read_records("--gt", &gt)?)
                .map_err(|e| fail("--gt", &gt, e))?;
            let pred_tracks = records_to_trajectories(&read_records("--pred", &pred)?)
                .map_err(|e| fail("--pred", &pred, e))?;
            let config = EvalConfig {
                iou_threshold: iou_thresh,
                motp_convention: motp_convention.into(),
            };
            let result = evaluate(&gt_tracks, &pred_tracks, &config).map_err(|e| {
                DataError(format!(
                    "--gt {} / --pred {}: {e}",
                    gt.display(),
                    pred.display()
                ))
            })?;
            emit("--report", report.as_deref(), &write_report(&result))
        }
        Command::QtsiTrace {
            det,
            track,
            gt,
            phi,
            tie_margin,
            out,
        } => {
            let config = QtsiConfig {
                iou_threshold: phi,
                tie_margin,
            };
            let trace = qtsi_trace(
                &read_records("--det", &det)?,
                &read_records("--track", &track)?,
                &read_records("--gt", &gt)?,
                &config,
            )
            .map_err(|e| fail("--track", &track, e))?;
            emit("--out", out.as_deref(), &trace)
        }
        Command::Report { inputs } => {
            let reports = inputs
                .iter()
                .map(|p| {
                    let file = fs::File::open(p).map_err(|e| fail("--in", p, e))?;
                    read_report(file).map_err(|e| fail("--in", p, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let pooled = aggregate(&reports).map_err(|e| DataError(format!("--in: {e}")))?;
            emit("--in", None, &write_report(&pooled))
        }
    }
}

fn by_frame(records: &[MotRecord]) -> BTreeMap<u64, Vec<&MotRecord>> {
    let mut frames: BTreeMap<u64, Vec<&MotRecord>> = BTreeMap::new();
    for r in records {
        frames.entry(r.frame).or_default().push(r);
    }
    frames
}

fn describe(q: Option<QueryRef>) -> String {
    match q {
        Some(QueryRef::Detect(i)) => format!("detect:{i}"),
        Some(QueryRef::Track(i)) => format!("track:{i}"),
        Some(QueryRef::NewMatch(i)) => format!("new:{i}"),
        None => "none".into(),
    }
}

/// One line per real box per frame. Query indices are positions within the
/// frame's rows of the respective file, in file order.
fn qtsi_trace(
    det: &[MotRecord],
    track: &[MotRecord],
    gt: &[MotRecord],
    config: &QtsiConfig,
) -> Result<String, fishtrack_core::qtsi::QtsiError> {
    let (det, track, gt) = (by_frame(det), by_frame(track), by_frame(gt));
    let mut frames: Vec<u64> = gt.keys().copied().collect();
    frames.extend(det.keys().chain(track.keys()));
    frames.sort_unstable();
    frames.dedup();

    let mut text = String::new();
    let empty = Vec::new();
    for frame in frames {
        let detect: Vec<Query> = det
            .get(&frame)
            .unwrap_or(&empty)
            .iter()
            .map(|r| Query::detect(r.bbox(), r.conf.clamp(0.0, 1.0)))
            .collect();
        let tracks: Vec<Query> = track
            .get(&frame)
            .unwrap_or(&empty)
            .iter()
            .map(|r| {
                Query::track(
                    r.bbox(),
                    TrackId(r.id.max(0) as u64),
                    r.conf.clamp(0.0, 1.0),
                )
            })
            .collect();
        let real: Vec<BoundingBox> = gt
            .get(&frame)
            .unwrap_or(&empty)
            .iter()
            .map(|r| r.bbox())
            .collect();
        let outcome = qtsi_merge(&detect, &tracks, &real, &[], config)?;
        for d in &outcome.decisions {
            let source = match d.source {
                DecisionSource::FromDetect => "detect",
                DecisionSource::FromTrack => "track",
                DecisionSource::Unmatched => "unmatched",
            };
            let inherited = d
                .inherited_identity
                .map_or("-".to_string(), |id| id.to_string());
            let _ = writeln!(
                text,
                "frame={frame} real={} winner={} iou={} source={source} inherited={inherited}",
                d.real_index,
                describe(d.winner),
                d.iou
            );
        }
        let _ = writeln!(
            text,
            "frame={frame} merged={} detect={} track={} real={}",
            outcome.merged.len(),
            detect.len(),
            tracks.len(),
            real.len()
        );
    }
    Ok(text)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DataError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
