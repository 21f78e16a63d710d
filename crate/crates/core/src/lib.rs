//! Multi-fish tracking toolkit: query merging between detect and track
//! queries, an online IOU tracker with miss tolerance, detection/tracking
//! losses, the CLEAR-MOT and identity metric suite, MOT text I/O, and a
//! seeded synthetic scene simulator that drives everything end to end.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod assignment;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod qtsi;
pub mod simulator;
pub mod tracker;

pub use assignment::{solve_min_cost, CostMatrix, Matching};
pub use exec::Execution;
pub use geometry::{giou, iou, BoundingBox};
pub use metrics::{EvalConfig, EvalCounts, EvalReport, Trajectory};
pub use qtsi::{qtsi_merge, QtsiConfig, Query, QueryKind};
pub use simulator::{simulate, SceneConfig, SceneOutput};
pub use tracker::{Detection, Tracker, TrackerConfig};

/// Object identity. Positive in MOT files; raw detections carry none.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
