//! MOT text format, scene configuration files and evaluation reports.
//!
//! A MOT line is `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`.
//! Raw detections use `id = -1`; ground truth and tracker output use
//! positive ids. On input the trailing `x,y,z` placeholders may be omitted
//! (7 to 10 fields); output always writes all ten. Numbers are written in
//! the shortest form that parses back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::metrics::{EvalReport, Trajectory};
use crate::simulator::{FrameDetections, SceneConfig};
use crate::tracker::{Detection, TrackOutput};
use crate::TrackId;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {reason}: {text:?}")]
    Parse {
        line: usize,
        text: String,
        reason: String,
    },
    #[error("duplicate box for id {id} in frame {frame}")]
    DuplicateBox { frame: u64, id: i64 },
    #[error("config: {0}")]
    Config(String),
    #[error("report: {0}")]
    Report(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotRecord {
    pub frame: u64,
    pub id: i64,
    pub bb_left: f64,
    pub bb_top: f64,
    pub bb_width: f64,
    pub bb_height: f64,
    pub conf: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MotRecord {
    pub fn new(frame: u64, id: i64, bbox: BoundingBox, conf: f64) -> Self {
        Self {
            frame,
            id,
            bb_left: bbox.x,
            bb_top: bbox.y,
            bb_width: bbox.w,
            bb_height: bbox.h,
            conf,
            x: -1.0,
            y: -1.0,
            z: -1.0,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x: self.bb_left,
            y: self.bb_top,
            w: self.bb_width,
            h: self.bb_height,
        }
    }
}

fn parse_frame(field: &str) -> Result<u64, String> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    // Some tools write integral frames as floats.
    match field.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v >= 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("frame `{field}` is not a non-negative integer")),
    }
}

fn parse_id(field: &str) -> Result<i64, String> {
    if let Ok(v) = field.parse::<i64>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() <= i64::MAX as f64 => Ok(v as i64),
        _ => Err(format!("id `{field}` is not an integer")),
    }
}

fn parse_num(name: &str, field: &str) -> Result<f64, String> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{name} `{field}` is not a finite number")),
    }
}

fn parse_line(line: &str) -> Result<MotRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if !(7..=10).contains(&fields.len()) {
        return Err(format!("expected 7 to 10 fields, found {}", fields.len()));
    }
    let num = |i: usize, name: &str| parse_num(name, fields[i]);
    let placeholder = |i: usize, name: &str| fields.get(i).map_or(Ok(-1.0), |f| parse_num(name, f));
    let record = MotRecord {
        frame: parse_frame(fields[0])?,
        id: parse_id(fields[1])?,
        bb_left: num(2, "bb_left")?,
        bb_top: num(3, "bb_top")?,
        bb_width: num(4, "bb_width")?,
        bb_height: num(5, "bb_height")?,
        conf: num(6, "conf")?,
        x: placeholder(7, "x")?,
        y: placeholder(8, "y")?,
        z: placeholder(9, "z")?,
    };
    if record.frame < 1 {
        return Err("frame must be at least 1".into());
    }
    if record.bb_width < 0.0 || record.bb_height < 0.0 {
        return Err("negative box extent".into());
    }
    Ok(record)
}

/// Parses MOT text, preserving input order. Blank lines are skipped.
pub fn read_mot<R: BufRead>(reader: R) -> Result<Vec<MotRecord>, IoError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(&line).map_err(|reason| IoError::Parse {
            line: i + 1,
            text: line.clone(),
            reason,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn parse_mot(text: &str) -> Result<Vec<MotRecord>, IoError> {
    read_mot(text.as_bytes())
}

/// Writes MOT text sorted by `(frame, id)`; equal keys keep input order.
pub fn write_mot(records: &[MotRecord]) -> String {
    let mut sorted: Vec<&MotRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut out = String::with_capacity(sorted.len() * 48);
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame, r.id, r.bb_left, r.bb_top, r.bb_width, r.bb_height, r.conf, r.x, r.y, r.z
        );
    }
    out
}

/// Groups identified records into trajectories, ordered by id. Records
/// with id <= 0 are ignored.
pub fn records_to_trajectories(records: &[MotRecord]) -> Result<Vec<Trajectory>, IoError> {
    let mut by_id: BTreeMap<i64, Trajectory> = BTreeMap::new();
    for r in records.iter().filter(|r| r.id > 0) {
        let t = by_id
            .entry(r.id)
            .or_insert_with(|| Trajectory::new(TrackId(r.id as u64)));
        if t.boxes.insert(r.frame, r.bbox()).is_some() {
            return Err(IoError::DuplicateBox {
                frame: r.frame,
                id: r.id,
            });
        }
    }
    Ok(by_id.into_values().collect())
}

pub fn trajectories_to_records(trajectories: &[Trajectory]) -> Vec<MotRecord> {
    trajectories
        .iter()
        .flat_map(|t| {
            t.boxes
                .iter()
                .map(move |(&f, &b)| MotRecord::new(f, t.identity.0 as i64, b, 1.0))
        })
        .collect()
}

/// Per-frame detections for frames `1..=last frame present`, so frames
/// without detections still appear (the tracker must see them to age its
/// tracks). Ids are ignored.
pub fn records_to_frames(records: &[MotRecord]) -> Vec<FrameDetections> {
    let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for r in records {
        by_frame
            .entry(r.frame)
            .or_default()
            .push(Detection::new(r.bbox(), r.conf));
    }
    let last = by_frame.keys().next_back().copied().unwrap_or(0);
    (1..=last)
        .map(|frame| FrameDetections {
            frame,
            detections: by_frame.remove(&frame).unwrap_or_default(),
        })
        .collect()
}

pub fn frames_to_records(frames: &[FrameDetections]) -> Vec<MotRecord> {
    frames
        .iter()
        .flat_map(|f| {
            f.detections
                .iter()
                .map(move |d| MotRecord::new(f.frame, -1, d.bbox, d.confidence))
        })
        .collect()
}

/// Tracker output as MOT records; coasting boxes only when asked.
pub fn outputs_to_records(
    outputs: &[(u64, Vec<TrackOutput>)],
    include_coasting: bool,
) -> Vec<MotRecord> {
    outputs
        .iter()
        .flat_map(|(frame, outs)| {
            outs.iter()
                .filter(move |o| include_coasting || !o.coasting)
                .map(move |o| MotRecord::new(*frame, o.identity.0 as i64, o.bbox, o.confidence))
        })
        .collect()
}

/// Scene configuration in TOML. Missing keys take their defaults; unknown
/// keys are rejected.
pub fn parse_scene_config(text: &str) -> Result<SceneConfig, IoError> {
    toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))
}

pub fn write_scene_config(config: &SceneConfig) -> String {
    toml::to_string(config).expect("scene config is plain data")
}

/// Pretty JSON with fields in declaration order.
pub fn write_report(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report is plain data");
    s.push('\n');
    s
}

pub fn read_report<R: Read>(reader: R) -> Result<EvalReport, IoError> {
    Ok(serde_json::from_reader(reader)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_line() {
        let r = parse_mot("1,1,10,20,30,40,1,-1,-1,-1").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].frame, 1);
        assert_eq!(r[0].id, 1);
        assert_eq!(
            r[0].bbox(),
            BoundingBox::new(10.0, 20.0, 30.0, 40.0).unwrap()
        );
        assert_eq!(r[0].conf, 1.0);
    }

    #[test]
    fn empty_and_trailing_blank_lines() {
        assert!(parse_mot("").unwrap().is_empty());
        let r = parse_mot("1,-1,0,0,1,1,0.5,-1,-1,-1\n\n  \n").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].id, -1);
    }

    #[test]
    fn arity_error_names_line() {
        let err = parse_mot("1,1,10").unwrap_err();
        match err {
            IoError::Parse { line, text, .. } => {
                assert_eq!(line, 1);
                assert_eq!(text, "1,1,10");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_mot("1,1,0,0,1,1,1\n2,x,0,0,1,1,1\n").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse_mot("0,1,0,0,1,1,1").is_err());
        assert!(parse_mot("1,1,0,0,-1,1,1").is_err());
        assert!(parse_mot("1,1,0,0,nan,1,1").is_err());
    }

    #[test]
    fn seven_field_lines_default_placeholders() {
        let r = parse_mot("3,2,1.5,2,3,4,0.9").unwrap();
        assert_eq!((r[0].x, r[0].y, r[0].z), (-1.0, -1.0, -1.0));
        assert_eq!(r[0].bb_left, 1.5);
    }

    #[test]
    fn write_sorts_and_is_minimal() {
        let b = BoundingBox::new(1.5, 2.0, 3.0, 4.0).unwrap();
        let recs = vec![
            MotRecord::new(2, 1, b, 1.0),
            MotRecord::new(1, 3, b, 0.25),
            MotRecord::new(1, 2, b, 1.0),
        ];
        let text = write_mot(&recs);
        assert_eq!(
            text,
            "1,2,1.5,2,3,4,1,-1,-1,-1\n1,3,1.5,2,3,4,0.25,-1,-1,-1\n2,1,1.5,2,3,4,1,-1,-1,-1\n"
        );
        let back = parse_mot(&text).unwrap();
        assert_eq!(back[0], recs[2]);
    }

    #[test]
    fn duplicate_boxes_rejected() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let recs = vec![MotRecord::new(1, 1, b, 1.0), MotRecord::new(1, 1, b, 1.0)];
        assert!(matches!(
            records_to_trajectories(&recs),
            Err(IoError::DuplicateBox { frame: 1, id: 1 })
        ));
    }

    #[test]
    fn frames_fill_gaps() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let frames = records_to_frames(&[MotRecord::new(3, -1, b, 0.9)]);
        assert_eq!(frames.len(), 3);
        assert!(frames[0].detections.is_empty());
        assert_eq!(frames[2].detections.len(), 1);
    }

    #[test]
    fn scene_config_roundtrip_and_defaults() {
        let cfg = parse_scene_config("fish_count = 3\nseed = 11\n").unwrap();
        assert_eq!(cfg.fish_count, 3);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.tank_width, 1920.0);
        assert_eq!(parse_scene_config(&write_scene_config(&cfg)).unwrap(), cfg);
        assert!(parse_scene_config("fish = 3").is_err());
    }
}
