//! End-to-end runs: simulate a scene, track its detections, evaluate the
//! tracks against ground truth. Batches of seeds or sequences are
//! independent and run through [`exec::map`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::exec::{self, Execution};
use crate::metrics::{evaluate_with, EvalConfig, EvalReport, MetricError, Trajectory};
use crate::simulator::{simulate, FrameDetections, SceneConfig, SceneError, SceneOutput};
use crate::tracker::{TrackOutput, Tracker, TrackerConfig, TrackerError};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    pub tracker: TrackerConfig,
    pub eval: EvalConfig,
    /// Score coasting boxes as predictions.
    pub include_coasting: bool,
}

#[derive(Debug, Clone)]
pub struct SceneRun {
    pub scene: SceneOutput,
    pub predictions: Vec<Trajectory>,
    pub report: EvalReport,
}

pub type FrameOutputs = Vec<(u64, Vec<TrackOutput>)>;

pub fn track_frames(
    frames: &[FrameDetections],
    config: TrackerConfig,
) -> Result<FrameOutputs, TrackerError> {
    let mut tracker = Tracker::new(config)?;
    frames
        .iter()
        .map(|f| Ok((f.frame, tracker.step(&f.detections, f.frame)?)))
        .collect()
}

/// Collects tracker outputs into one trajectory per identity.
pub fn outputs_to_trajectories(
    outputs: &[(u64, Vec<TrackOutput>)],
    include_coasting: bool,
) -> Vec<Trajectory> {
    let mut by_id: BTreeMap<_, Trajectory> = BTreeMap::new();
    for (frame, outs) in outputs {
        for o in outs.iter().filter(|o| include_coasting || !o.coasting) {
            by_id
                .entry(o.identity)
                .or_insert_with(|| Trajectory::new(o.identity))
                .boxes
                .insert(*frame, o.bbox);
        }
    }
    by_id.into_values().collect()
}

pub fn run_scene(config: &PipelineConfig) -> Result<SceneRun, PipelineError> {
    run_scene_with(config, Execution::Sequential)
}

fn run_scene_with(
    config: &PipelineConfig,
    execution: Execution,
) -> Result<SceneRun, PipelineError> {
    let scene = simulate(&config.scene)?;
    let outputs = track_frames(&scene.detections, config.tracker)?;
    let predictions = outputs_to_trajectories(&outputs, config.include_coasting);
    let report = evaluate_with(&scene.gt, &predictions, &config.eval, execution)?;
    Ok(SceneRun {
        scene,
        predictions,
        report,
    })
}

/// Runs the same pipeline once per seed. Reports come back in seed order.
pub fn run_seeds(
    config: &PipelineConfig,
    seeds: &[u64],
    execution: Execution,
) -> Result<Vec<EvalReport>, PipelineError> {
    exec::map(execution, seeds, |&seed| {
        let cfg = PipelineConfig {
            scene: SceneConfig {
                seed,
                ..config.scene
            },
            ..*config
        };
        // Seeds are already spread over workers; keep each run sequential.
        run_scene_with(&cfg, Execution::Sequential).map(|run| run.report)
    })
    .into_iter()
    .collect()
}

/// Evaluates independent `(ground truth, predictions)` sequences.
pub fn evaluate_sequences(
    sequences: &[(Vec<Trajectory>, Vec<Trajectory>)],
    config: &EvalConfig,
    execution: Execution,
) -> Vec<Result<EvalReport, MetricError>> {
    exec::map(execution, sequences, |(gt, pred)| {
        evaluate_with(gt, pred, config, Execution::Sequential)
    })
}

/// Mean MOTA over reports.
pub fn mean_mota(reports: &[EvalReport]) -> f64 {
    reports.iter().map(|r| r.mota).sum::<f64>() / reports.len() as f64
}
