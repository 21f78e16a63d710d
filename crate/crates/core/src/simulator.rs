//! Seeded synthetic tank scenes: ground-truth fish trajectories plus a
//! corrupted detection stream and a log of every corruption.
//!
//! Randomness comes from `ChaCha8Rng` (rand_chacha) seeded with
//! `seed_from_u64`. Motion and sensing draw from separate ChaCha streams,
//! so changing noise rates never changes the ground truth, and every
//! per-fish draw happens whether or not it is used, so raising `fn_rate`
//! only ever drops a superset of detections.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BoundingBox};
use crate::metrics::Trajectory;
use crate::tracker::Detection;
use crate::TrackId;

const MOTION_STREAM: u64 = 0;
const SENSING_STREAM: u64 = 1;
/// Std-dev of spurious boxes around a clutter object, pixels.
const CLUTTER_SPREAD: f64 = 3.0;
const TRUE_CONFIDENCE: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub tank_width: f64,
    pub tank_height: f64,
    pub fps: f64,
    pub duration_frames: u32,
    pub fish_count: u32,
    /// Body length, pixels. Box height is `BODY_ASPECT` times the length.
    pub fish_size_mean: f64,
    pub fish_size_std: f64,
    /// Pixels per frame.
    pub speed_max: f64,
    /// Max heading change, radians per frame.
    pub turn_rate: f64,
    /// The smaller of two fish is hidden when their IOU exceeds this.
    pub occlusion_iou: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
    pub jitter_std: f64,
    pub clutter_count: u32,
    pub seed: u64,
}

const BODY_ASPECT: f64 = 0.4;

impl Default for SceneConfig {
    /// 1920x1080 at 30 fps, 15 s, ten fish with mild sensing noise.
    fn default() -> Self {
        Self {
            tank_width: 1920.0,
            tank_height: 1080.0,
            fps: 30.0,
            duration_frames: 450,
            fish_count: 10,
            fish_size_mean: 160.0,
            fish_size_std: 20.0,
            speed_max: 8.0,
            turn_rate: 0.08,
            occlusion_iou: 0.6,
            fn_rate: 0.05,
            fp_rate: 0.02,
            jitter_std: 2.0,
            clutter_count: 3,
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// Same scene geometry with every corruption switched off.
    pub fn noiseless(self) -> Self {
        Self {
            occlusion_iou: 1.0,
            fn_rate: 0.0,
            fp_rate: 0.0,
            jitter_std: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Invalid(msg));
        for (name, v) in [
            ("occlusion_iou", self.occlusion_iou),
            ("fn_rate", self.fn_rate),
            ("fp_rate", self.fp_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("tank_width", self.tank_width),
            ("tank_height", self.tank_height),
            ("fps", self.fps),
            ("fish_size_mean", self.fish_size_mean),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        for (name, v) in [
            ("fish_size_std", self.fish_size_std),
            ("speed_max", self.speed_max),
            ("turn_rate", self.turn_rate),
            ("jitter_std", self.jitter_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be non-negative"));
            }
        }
        if self.duration_frames < 1 {
            return bad("duration_frames must be at least 1".into());
        }
        let longest = self.fish_size_mean * 1.5;
        if longest >= self.tank_width || longest * BODY_ASPECT >= self.tank_height {
            return bad(format!(
                "fish up to {longest} px long do not fit a {}x{} tank",
                self.tank_width, self.tank_height
            ));
        }
        Ok(())
    }
}

/// One corruption applied while turning ground truth into detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneEvent {
    /// Fish `fish` was hidden by the larger fish `by`.
    Occluded { frame: u64, fish: u32, by: u32 },
    /// Random miss.
    Missed { frame: u64, fish: u32 },
    /// Detection emitted with noise; `bbox` is the reported box.
    Jittered {
        frame: u64,
        fish: u32,
        bbox: BoundingBox,
    },
    /// Spurious detection near clutter object `source`.
    FalsePositive {
        frame: u64,
        source: u32,
        bbox: BoundingBox,
        confidence: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOutput {
    /// One trajectory per fish; identity `fish + 1`, frames `1..=duration`.
    pub gt: Vec<Trajectory>,
    /// Every frame, in order, including frames without detections.
    pub detections: Vec<FrameDetections>,
    pub events: Vec<SceneEvent>,
}

impl SceneOutput {
    /// Rebuilds the detection stream from ground truth and the event log
    /// alone.
    pub fn replay(&self) -> Vec<FrameDetections> {
        let frames: Vec<u64> = self.detections.iter().map(|f| f.frame).collect();
        frames
            .into_iter()
            .map(|frame| {
                let events: Vec<&SceneEvent> = self
                    .events
                    .iter()
                    .filter(|e| event_frame(e) == frame)
                    .collect();
                let mut detections = Vec::new();
                for (fish, traj) in self.gt.iter().enumerate() {
                    let fish = fish as u32;
                    let Some(&gt_box) = traj.boxes.get(&frame) else {
                        continue;
                    };
                    let mut bbox = Some(gt_box);
                    for e in &events {
                        match e {
                            SceneEvent::Occluded { fish: f, .. }
                            | SceneEvent::Missed { fish: f, .. }
                                if *f == fish =>
                            {
                                bbox = None
                            }
                            SceneEvent::Jittered {
                                fish: f, bbox: b, ..
                            } if *f == fish => bbox = Some(*b),
                            _ => {}
                        }
                    }
                    if let Some(b) = bbox {
                        detections.push(Detection::new(b, TRUE_CONFIDENCE));
                    }
                }
                for e in &events {
                    if let SceneEvent::FalsePositive {
                        bbox, confidence, ..
                    } = e
                    {
                        detections.push(Detection::new(*bbox, *confidence));
                    }
                }
                FrameDetections { frame, detections }
            })
            .collect()
    }

    pub fn gt_box_count(&self) -> usize {
        self.gt.iter().map(Trajectory::len).sum()
    }
}

fn event_frame(e: &SceneEvent) -> u64 {
    match e {
        SceneEvent::Occluded { frame, .. }
        | SceneEvent::Missed { frame, .. }
        | SceneEvent::Jittered { frame, .. }
        | SceneEvent::FalsePositive { frame, .. } => *frame,
    }
}

struct Fish {
    cx: f64,
    cy: f64,
    heading: f64,
    speed: f64,
    w: f64,
    h: f64,
}

impl Fish {
    fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x: self.cx - 0.5 * self.w,
            y: self.cy - 0.5 * self.h,
            w: self.w,
            h: self.h,
        }
    }

    /// Advances one frame with reflective walls.
    fn advance(&mut self, cfg: &SceneConfig, turn: f64, accel: f64) {
        self.heading = (self.heading + turn).rem_euclid(TAU);
        let floor = 0.25 * cfg.speed_max;
        self.speed = (self.speed + accel).clamp(floor, cfg.speed_max);
        self.cx += self.speed * self.heading.cos();
        self.cy += self.speed * self.heading.sin();

        let (lo_x, hi_x) = (0.5 * self.w, cfg.tank_width - 0.5 * self.w);
        if self.cx < lo_x || self.cx > hi_x {
            self.cx = reflect(self.cx, lo_x, hi_x);
            self.heading = (PI - self.heading).rem_euclid(TAU);
        }
        let (lo_y, hi_y) = (0.5 * self.h, cfg.tank_height - 0.5 * self.h);
        if self.cy < lo_y || self.cy > hi_y {
            self.cy = reflect(self.cy, lo_y, hi_y);
            self.heading = (-self.heading).rem_euclid(TAU);
        }
    }
}

fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    let r = if v < lo { 2.0 * lo - v } else { 2.0 * hi - v };
    r.clamp(lo, hi)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates a scene. Identical configs give identical output.
pub fn simulate(config: &SceneConfig) -> Result<SceneOutput, SceneError> {
    config.validate()?;
    let cfg = config;
    let mut motion = stream(cfg.seed, MOTION_STREAM);
    let mut sensing = stream(cfg.seed, SENSING_STREAM);

    let mut fish: Vec<Fish> = (0..cfg.fish_count)
        .map(|_| {
            let length = (cfg.fish_size_mean + cfg.fish_size_std * normal(&mut motion))
                .clamp(0.5 * cfg.fish_size_mean, 1.5 * cfg.fish_size_mean);
            let (w, h) = (length, length * BODY_ASPECT);
            Fish {
                cx: motion.gen_range(0.5 * w..=cfg.tank_width - 0.5 * w),
                cy: motion.gen_range(0.5 * h..=cfg.tank_height - 0.5 * h),
                heading: motion.gen_range(0.0..TAU),
                speed: cfg.speed_max * motion.gen_range(0.5..=1.0),
                w,
                h,
            }
        })
        .collect();

    let clutter: Vec<BoundingBox> = (0..cfg.clutter_count)
        .map(|_| {
            let w = cfg.fish_size_mean * sensing.gen_range(0.3..=0.8);
            let h = cfg.fish_size_mean * sensing.gen_range(0.3..=0.8);
            BoundingBox {
                x: sensing.gen_range(0.0..=(cfg.tank_width - w).max(0.0)),
                y: sensing.gen_range(0.0..=(cfg.tank_height - h).max(0.0)),
                w: w.min(cfg.tank_width),
                h: h.min(cfg.tank_height),
            }
        })
        .collect();

    let mut gt: Vec<Trajectory> = (0..cfg.fish_count)
        .map(|i| Trajectory::new(TrackId(i as u64 + 1)))
        .collect();
    let mut detections = Vec::with_capacity(cfg.duration_frames as usize);
    let mut events = Vec::new();

    for frame in 1..=cfg.duration_frames as u64 {
        if frame > 1 {
            for f in &mut fish {
                let turn = motion.gen_range(-1.0..=1.0) * cfg.turn_rate;
                let accel = 0.1 * cfg.speed_max * normal(&mut motion);
                f.advance(cfg, turn, accel);
            }
        }
        let boxes: Vec<BoundingBox> = fish.iter().map(Fish::bbox).collect();
        for (traj, b) in gt.iter_mut().zip(&boxes) {
            traj.boxes.insert(frame, *b);
        }

        let occluder = occlusions(&boxes, cfg.occlusion_iou);
        let mut frame_dets = Vec::new();
        for (i, gt_box) in boxes.iter().enumerate() {
            let i = i as u32;
            let miss_draw: f64 = sensing.gen();
            let noise = [
                normal(&mut sensing),
                normal(&mut sensing),
                normal(&mut sensing),
                normal(&mut sensing),
            ];
            if let Some(by) = occluder[i as usize] {
                events.push(SceneEvent::Occluded { frame, fish: i, by });
                continue;
            }
            if miss_draw < cfg.fn_rate {
                events.push(SceneEvent::Missed { frame, fish: i });
                continue;
            }
            let bbox = if cfg.jitter_std > 0.0 {
                let s = cfg.jitter_std;
                let noisy = BoundingBox {
                    x: gt_box.x + s * noise[0],
                    y: gt_box.y + s * noise[1],
                    w: (gt_box.w + s * noise[2]).max(0.0),
                    h: (gt_box.h + s * noise[3]).max(0.0),
                }
                .clip_to(cfg.tank_width, cfg.tank_height);
                events.push(SceneEvent::Jittered {
                    frame,
                    fish: i,
                    bbox: noisy,
                });
                noisy
            } else {
                *gt_box
            };
            frame_dets.push(Detection::new(bbox, TRUE_CONFIDENCE));
        }

        for (source, c) in clutter.iter().enumerate() {
            let fire: f64 = sensing.gen();
            let (dx, dy) = (normal(&mut sensing), normal(&mut sensing));
            let confidence = sensing.gen_range(0.3..=0.9);
            if fire < cfg.fp_rate {
                let bbox = c
                    .translate(CLUTTER_SPREAD * dx, CLUTTER_SPREAD * dy)
                    .clip_to(cfg.tank_width, cfg.tank_height);
                events.push(SceneEvent::FalsePositive {
                    frame,
                    source: source as u32,
                    bbox,
                    confidence,
                });
                frame_dets.push(Detection::new(bbox, confidence));
            }
        }

        detections.push(FrameDetections {
            frame,
            detections: frame_dets,
        });
    }

    Ok(SceneOutput {
        gt,
        detections,
        events,
    })
}

/// For each fish, the fish hiding it (if any): the larger of every pair
/// overlapping above `threshold` hides the smaller; equal areas hide the
/// later index. The largest occluder is reported.
fn occlusions(boxes: &[BoundingBox], threshold: f64) -> Vec<Option<u32>> {
    let mut by: Vec<Option<u32>> = vec![None; boxes.len()];
    for i in 0..boxes.len() {
        for j in (i + 1)..boxes.len() {
            if iou(&boxes[i], &boxes[j]) <= threshold {
                continue;
            }
            let (hidden, front) = if boxes[i].area() < boxes[j].area() {
                (i, j)
            } else {
                (j, i)
            };
            let replace =
                by[hidden].is_none_or(|cur| boxes[front].area() > boxes[cur as usize].area());
            if replace {
                by[hidden] = Some(front as u32);
            }
        }
    }
    by
}
