//! Online track-query lifecycle: predict, associate, update, retire.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_min_cost, CostMatrix};
use crate::geometry::{iou, BoundingBox};
use crate::TrackId;

const VELOCITY_SMOOTHING: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("frame index {got} does not follow previous frame {previous}")]
    NonMonotoneFrame { previous: u64, got: u64 },
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub iou_match_threshold: f64,
    /// Consecutive unmatched frames a track survives before retirement.
    pub miss_tolerance: u32,
    pub min_confidence: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_match_threshold: 0.5,
            miss_tolerance: 100,
            min_confidence: 0.1,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(0.0..=1.0).contains(&self.iou_match_threshold) {
            return Err(TrackerError::InvalidConfig(format!(
                "iou_match_threshold {} outside [0, 1]",
                self.iou_match_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(TrackerError::InvalidConfig(format!(
                "min_confidence {} outside [0, 1]",
                self.min_confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub identity: TrackId,
    pub bbox: BoundingBox,
    /// Pixels per frame, top-left corner.
    pub velocity: (f64, f64),
    pub miss_count: u32,
    pub age: u32,
    pub confidence: f64,
    last_observed: BoundingBox,
    last_observed_frame: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Self {
        Self { bbox, confidence }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub identity: TrackId,
    pub bbox: BoundingBox,
    pub confidence: f64,
    /// Unmatched this frame; box is the motion-model prediction.
    pub coasting: bool,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<TrackState>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live tracks, in identity order.
    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// Advances one frame. Outputs matched tracks and coasting tracks,
    /// ordered by identity.
    pub fn step(
        &mut self,
        detections: &[Detection],
        frame_index: u64,
    ) -> Result<Vec<TrackOutput>, TrackerError> {
        let elapsed = match self.last_frame {
            Some(previous) if frame_index <= previous => {
                return Err(TrackerError::NonMonotoneFrame {
                    previous,
                    got: frame_index,
                })
            }
            Some(previous) => frame_index - previous,
            None => 1,
        };
        self.last_frame = Some(frame_index);

        let detections: Vec<&Detection> = detections
            .iter()
            .filter(|d| d.confidence >= self.config.min_confidence)
            .collect();

        for track in &mut self.tracks {
            let steps = elapsed as f64;
            track.bbox = track
                .bbox
                .translate(track.velocity.0 * steps, track.velocity.1 * steps);
            track.age += elapsed as u32;
        }

        let threshold = self.config.iou_match_threshold;
        let costs = CostMatrix::from_fn(self.tracks.len(), detections.len(), |t, d| {
            let overlap = iou(&self.tracks[t].bbox, &detections[d].bbox);
            (overlap > threshold).then_some(1.0 - overlap)
        })
        .expect("IOU-derived costs are finite");
        let matching = solve_min_cost(&costs);

        let mut matched = vec![false; self.tracks.len()];
        for &(t, d) in &matching.pairs {
            let det = detections[d];
            let track = &mut self.tracks[t];
            let gap = (frame_index - track.last_observed_frame) as f64;
            let measured = (
                (det.bbox.x - track.last_observed.x) / gap,
                (det.bbox.y - track.last_observed.y) / gap,
            );
            track.velocity = (
                VELOCITY_SMOOTHING * track.velocity.0 + (1.0 - VELOCITY_SMOOTHING) * measured.0,
                VELOCITY_SMOOTHING * track.velocity.1 + (1.0 - VELOCITY_SMOOTHING) * measured.1,
            );
            track.bbox = det.bbox;
            track.last_observed = det.bbox;
            track.last_observed_frame = frame_index;
            track.miss_count = 0;
            track.confidence = det.confidence;
            matched[t] = true;
        }

        for (track, was_matched) in self.tracks.iter_mut().zip(&matched) {
            if !was_matched {
                track.miss_count = track.miss_count.saturating_add(elapsed as u32);
            }
        }
        let tolerance = self.config.miss_tolerance;
        self.tracks.retain(|t| t.miss_count <= tolerance);

        for &d in &matching.unmatched_cols {
            let det = detections[d];
            let identity = TrackId(self.next_id);
            self.next_id += 1;
            self.tracks.push(TrackState {
                identity,
                bbox: det.bbox,
                velocity: (0.0, 0.0),
                miss_count: 0,
                age: 1,
                confidence: det.confidence,
                last_observed: det.bbox,
                last_observed_frame: frame_index,
            });
        }

        Ok(self
            .tracks
            .iter()
            .map(|t| TrackOutput {
                identity: t.identity,
                bbox: t.bbox,
                confidence: t.confidence,
                coasting: t.miss_count > 0,
            })
            .collect())
    }
}

/// Runs a tracker over a whole sequence of frames `(frame_index, detections)`.
pub fn track_sequence<'a, I>(
    config: TrackerConfig,
    frames: I,
) -> Result<Vec<(u64, Vec<TrackOutput>)>, TrackerError>
where
    I: IntoIterator<Item = (u64, &'a [Detection])>,
{
    let mut tracker = Tracker::new(config)?;
    frames
        .into_iter()
        .map(|(frame, dets)| Ok((frame, tracker.step(dets, frame)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection::new(BoundingBox::new(x, y, w, h).unwrap(), 0.9)
    }

    #[test]
    fn empty_in_empty_out() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        assert!(t.step(&[], 1).unwrap().is_empty());
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn small_shift_keeps_identity() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let a = t.step(&[det(0.0, 0.0, 10.0, 10.0)], 1).unwrap();
        // IOU = 90 / 110
        let b = t.step(&[det(1.0, 0.0, 10.0, 10.0)], 2).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 1);
        assert_eq!(a[0].identity, b[0].identity);
        assert!(!b[0].coasting);
        assert_eq!(b[0].bbox, det(1.0, 0.0, 10.0, 10.0).bbox);
    }

    #[test]
    fn retirement_after_tolerance_mints_new_identity() {
        let cfg = TrackerConfig {
            miss_tolerance: 3,
            ..Default::default()
        };
        let mut t = Tracker::new(cfg).unwrap();
        let d = det(0.0, 0.0, 10.0, 10.0);
        let first = t.step(&[d], 1).unwrap()[0].identity;
        for f in 2..=4 {
            let out = t.step(&[], f).unwrap();
            assert_eq!(out.len(), 1);
            assert!(out[0].coasting);
        }
        assert!(t.step(&[], 5).unwrap().is_empty());
        let again = t.step(&[d], 6).unwrap()[0].identity;
        assert_ne!(first, again);
        assert!(again > first);
    }

    #[test]
    fn track_survives_exactly_tolerance_misses() {
        let cfg = TrackerConfig {
            miss_tolerance: 2,
            ..Default::default()
        };
        let mut t = Tracker::new(cfg).unwrap();
        let d = det(0.0, 0.0, 10.0, 10.0);
        let id = t.step(&[d], 1).unwrap()[0].identity;
        t.step(&[], 2).unwrap();
        t.step(&[], 3).unwrap();
        let out = t.step(&[d], 4).unwrap();
        assert_eq!(out[0].identity, id);
        assert!(!out[0].coasting);
    }

    #[test]
    fn low_confidence_detections_are_ignored() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let weak = Detection::new(det(0.0, 0.0, 10.0, 10.0).bbox, 0.05);
        assert!(t.step(&[weak], 1).unwrap().is_empty());
    }

    #[test]
    fn rejects_non_monotone_frames() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(&[], 5).unwrap();
        assert_eq!(
            t.step(&[], 5),
            Err(TrackerError::NonMonotoneFrame {
                previous: 5,
                got: 5
            })
        );
    }

    #[test]
    fn coasting_follows_velocity() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        t.step(&[det(0.0, 0.0, 20.0, 20.0)], 1).unwrap();
        t.step(&[det(4.0, 0.0, 20.0, 20.0)], 2).unwrap();
        // Smoothed velocity: 0.5 * 0 + 0.5 * 4 = 2 px/frame.
        let out = t.step(&[], 3).unwrap();
        assert!(out[0].coasting);
        assert_eq!(out[0].bbox.x, 6.0);
    }

    #[test]
    fn identities_increase_monotonically() {
        let mut t = Tracker::new(TrackerConfig::default()).unwrap();
        let out = t
            .step(&[det(0.0, 0.0, 10.0, 10.0), det(100.0, 0.0, 10.0, 10.0)], 1)
            .unwrap();
        let ids: Vec<u64> = out.iter().map(|o| o.identity.0).collect();
        assert_eq!(ids, vec![1, 2]);
    }
}
