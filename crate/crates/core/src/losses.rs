//! Per-frame weighted detection/tracking loss and its sequence-level
//! average. Diagnostics only; nothing here carries gradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{giou, BoundingBox};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("no ground truth in any frame; the average is undefined")]
    NoGroundTruth,
    #[error("loss weight `{name}` must be finite and non-negative, got {value}")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("image size must be positive, got {width}x{height}")]
    InvalidImageSize { width: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_l1: f64,
    pub lambda_giou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cls: 2.0,
            lambda_l1: 5.0,
            lambda_giou: 2.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_cls: f64, lambda_l1: f64, lambda_giou: f64) -> Result<Self, LossError> {
        let w = Self {
            lambda_cls,
            lambda_l1,
            lambda_giou,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [
            ("lambda_cls", self.lambda_cls),
            ("lambda_l1", self.lambda_l1),
            ("lambda_giou", self.lambda_giou),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(LossError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambda_cls: self.lambda_cls * c,
            lambda_l1: self.lambda_l1 * c,
            lambda_giou: self.lambda_giou * c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// Binary focal loss for one prediction.
pub fn focal_loss(predicted_prob: f64, is_positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = predicted_prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if is_positive {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

/// A prediction already matched to its ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub predicted: BoundingBox,
    pub probability: f64,
    pub ground_truth: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

impl ImageSize {
    pub fn new(width: f64, height: f64) -> Result<Self, LossError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(LossError::InvalidImageSize { width, height });
        }
        Ok(Self { width, height })
    }
}

/// Mean absolute difference over the four normalized box coordinates.
fn normalized_l1(a: &BoundingBox, b: &BoundingBox, image: ImageSize) -> f64 {
    let (sw, sh) = (image.width, image.height);
    ((a.x - b.x).abs() / sw
        + (a.y - b.y).abs() / sh
        + (a.w - b.w).abs() / sw
        + (a.h - b.h).abs() / sh)
        / 4.0
}

/// Weighted loss of one frame: focal classification, normalized L1 and
/// `1 - giou`, each averaged over the matched pairs. Zero for no pairs.
pub fn frame_loss(
    pairs: &[MatchedPair],
    weights: &LossWeights,
    focal: &FocalParams,
    image: ImageSize,
) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let (mut cls, mut l1, mut g) = (0.0, 0.0, 0.0);
    for pair in pairs {
        cls += focal_loss(pair.probability, true, focal.alpha, focal.gamma);
        l1 += normalized_l1(&pair.predicted, &pair.ground_truth, image);
        g += 1.0 - giou(&pair.predicted, &pair.ground_truth);
    }
    weights.lambda_cls * cls / n + weights.lambda_l1 * l1 / n + weights.lambda_giou * g / n
}

/// Per-frame totals feeding the sequence average.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameLossStats {
    pub track_loss: f64,
    pub detect_loss: f64,
    pub v_track: u64,
    pub v_detect: u64,
}

impl FrameLossStats {
    pub fn ground_truth_count(&self) -> u64 {
        self.v_track + self.v_detect
    }
}

/// Sum of track and detect losses over all frames divided by the total
/// ground-truth count.
pub fn joint_average_loss(frames: &[FrameLossStats]) -> Result<f64, LossError> {
    let total: u64 = frames.iter().map(FrameLossStats::ground_truth_count).sum();
    if total == 0 {
        return Err(LossError::NoGroundTruth);
    }
    let numerator: f64 = frames.iter().map(|f| f.track_loss + f.detect_loss).sum();
    Ok(numerator / total as f64)
}
