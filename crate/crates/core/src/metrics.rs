//! CLEAR-MOT accumulation (MOTA, MOTP) and identity metrics (IDF1, IDP,
//! IDR) over ground-truth and predicted trajectory sets.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_min_cost, CostMatrix};
use crate::exec::{self, Execution};
use crate::geometry::{iou, BoundingBox};
use crate::TrackId;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{metric} is undefined: {reason}")]
    Undefined {
        metric: &'static str,
        reason: &'static str,
    },
    #[error("iou threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub identity: TrackId,
    /// Frame index to box. One box per frame.
    pub boxes: BTreeMap<u64, BoundingBox>,
}

impl Trajectory {
    pub fn new(identity: TrackId) -> Self {
        Self {
            identity,
            boxes: BTreeMap::new(),
        }
    }

    pub fn with_boxes<I: IntoIterator<Item = (u64, BoundingBox)>>(
        identity: TrackId,
        boxes: I,
    ) -> Self {
        Self {
            identity,
            boxes: boxes.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Raw accumulators behind every reported metric.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub false_negatives: u64,
    pub false_positives: u64,
    pub id_switches: u64,
    pub gt_total: u64,
    pub pred_total: u64,
    /// `1 - IOU` of every CLEAR-MOT match.
    pub match_distances: Vec<f64>,
    pub match_count: u64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

impl EvalCounts {
    /// Sums counts of another sequence into this one.
    pub fn merge(&mut self, other: &EvalCounts) {
        self.false_negatives += other.false_negatives;
        self.false_positives += other.false_positives;
        self.id_switches += other.id_switches;
        self.gt_total += other.gt_total;
        self.pred_total += other.pred_total;
        self.match_distances
            .extend_from_slice(&other.match_distances);
        self.match_count += other.match_count;
        self.idtp += other.idtp;
        self.idfp += other.idfp;
        self.idfn += other.idfn;
    }
}

/// Which quantity MOTP averages over matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotpConvention {
    /// `1 - IOU`; lower is better.
    #[default]
    Distance,
    /// Raw IOU; higher is better.
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub motp_convention: MotpConvention,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            motp_convention: MotpConvention::Distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub motp_convention: MotpConvention,
    /// Metrics whose denominator was zero; they are reported as 0.
    pub undefined: Vec<String>,
    pub counts: EvalCounts,
}

fn check_threshold(t: f64) -> Result<(), MetricError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(MetricError::InvalidThreshold(t))
    }
}

type FrameEntries = (Vec<(usize, BoundingBox)>, Vec<(usize, BoundingBox)>);

/// Per-frame boxes of both sets, keyed by trajectory index.
fn frames_of(gt: &[Trajectory], pred: &[Trajectory]) -> BTreeMap<u64, FrameEntries> {
    let mut frames: BTreeMap<u64, FrameEntries> = BTreeMap::new();
    for (i, t) in gt.iter().enumerate() {
        for (&f, &b) in &t.boxes {
            frames.entry(f).or_default().0.push((i, b));
        }
    }
    for (i, t) in pred.iter().enumerate() {
        for (&f, &b) in &t.boxes {
            frames.entry(f).or_default().1.push((i, b));
        }
    }
    frames
}

/// CLEAR-MOT matching. Fills FN, FP, switches, T and match distances; the
/// identity counts are left at zero.
pub fn clear_mot(
    gt: &[Trajectory],
    pred: &[Trajectory],
    iou_threshold: f64,
) -> Result<EvalCounts, MetricError> {
    check_threshold(iou_threshold)?;
    let mut counts = EvalCounts::default();
    // gt index -> prediction identity of its most recent match.
    let mut last_match: HashMap<usize, TrackId> = HashMap::new();

    for (gts, preds) in frames_of(gt, pred).into_values() {
        counts.gt_total += gts.len() as u64;
        counts.pred_total += preds.len() as u64;

        let mut gt_used = vec![false; gts.len()];
        let mut pred_used = vec![false; preds.len()];
        let mut matches: Vec<(usize, usize, f64)> = Vec::new();

        // Keep last correspondences that are still valid.
        for (gi, &(g, gbox)) in gts.iter().enumerate() {
            let Some(&prev) = last_match.get(&g) else {
                continue;
            };
            let found = preds
                .iter()
                .enumerate()
                .find(|&(pi, &(p, _))| !pred_used[pi] && pred[p].identity == prev);
            if let Some((pi, &(_, pbox))) = found {
                let overlap = iou(&gbox, &pbox);
                if overlap > iou_threshold {
                    gt_used[gi] = true;
                    pred_used[pi] = true;
                    matches.push((gi, pi, overlap));
                }
            }
        }

        let free_gt: Vec<usize> = (0..gts.len()).filter(|&i| !gt_used[i]).collect();
        let free_pred: Vec<usize> = (0..preds.len()).filter(|&i| !pred_used[i]).collect();
        let costs = CostMatrix::from_fn(free_gt.len(), free_pred.len(), |r, c| {
            let overlap = iou(&gts[free_gt[r]].1, &preds[free_pred[c]].1);
            (overlap > iou_threshold).then_some(1.0 - overlap)
        })
        .expect("IOU-derived costs are finite");
        for (r, c) in solve_min_cost(&costs).pairs {
            let (gi, pi) = (free_gt[r], free_pred[c]);
            gt_used[gi] = true;
            pred_used[pi] = true;
            matches.push((gi, pi, iou(&gts[gi].1, &preds[pi].1)));
        }

        for (gi, pi, overlap) in matches {
            let g = gts[gi].0;
            let p_id = pred[preds[pi].0].identity;
            if let Some(prev) = last_match.insert(g, p_id) {
                if prev != p_id {
                    counts.id_switches += 1;
                }
            }
            counts.match_distances.push(1.0 - overlap);
        }
        counts.match_count = counts.match_distances.len() as u64;
        counts.false_negatives += gt_used.iter().filter(|u| !**u).count() as u64;
        counts.false_positives += pred_used.iter().filter(|u| !**u).count() as u64;
    }
    Ok(counts)
}

/// `1 - (FN + FP + switches) / T`.
pub fn mota(counts: &EvalCounts) -> Result<f64, MetricError> {
    if counts.gt_total == 0 {
        return Err(MetricError::Undefined {
            metric: "mota",
            reason: "no ground-truth boxes",
        });
    }
    let errors = counts.false_negatives + counts.false_positives + counts.id_switches;
    Ok(1.0 - errors as f64 / counts.gt_total as f64)
}

/// Mean match distance (`1 - IOU`), or mean IOU under
/// [`MotpConvention::Overlap`].
pub fn motp(counts: &EvalCounts, convention: MotpConvention) -> Result<f64, MetricError> {
    if counts.match_distances.is_empty() {
        return Err(MetricError::Undefined {
            metric: "motp",
            reason: "no matches",
        });
    }
    let n = counts.match_distances.len() as f64;
    let mean_distance = counts.match_distances.iter().sum::<f64>() / n;
    Ok(match convention {
        MotpConvention::Distance => mean_distance,
        MotpConvention::Overlap => 1.0 - mean_distance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdMetrics {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
    /// False when there are no predictions; `idp` is then reported as 0.
    pub idp_defined: bool,
    /// False when there is no ground truth; `idr` is then reported as 0.
    pub idr_defined: bool,
}

impl IdMetrics {
    pub fn from_counts(idtp: u64, idfp: u64, idfn: u64) -> Result<Self, MetricError> {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let idf1 = ratio(2 * idtp, 2 * idtp + idfp + idfn).ok_or(MetricError::Undefined {
            metric: "idf1",
            reason: "both trajectory sets are empty",
        })?;
        let idp = ratio(idtp, idtp + idfp);
        let idr = ratio(idtp, idtp + idfn);
        Ok(Self {
            idf1,
            idp: idp.unwrap_or(0.0),
            idr: idr.unwrap_or(0.0),
            idtp,
            idfp,
            idfn,
            idp_defined: idp.is_some(),
            idr_defined: idr.is_some(),
        })
    }
}

/// Number of frames in which two trajectories co-locate above threshold.
pub fn co_located_frames(a: &Trajectory, b: &Trajectory, iou_threshold: f64) -> u64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .boxes
        .iter()
        .filter(|(f, sb)| {
            large
                .boxes
                .get(f)
                .is_some_and(|lb| iou(sb, lb) > iou_threshold)
        })
        .count() as u64
}

/// Global identity matching: one-to-one pairing of GT and predicted
/// identities maximizing co-located frames, via min-cost assignment over
/// an augmented matrix with a dummy partner for every identity.
pub fn id_metrics(
    gt: &[Trajectory],
    pred: &[Trajectory],
    iou_threshold: f64,
) -> Result<IdMetrics, MetricError> {
    id_metrics_with(gt, pred, iou_threshold, Execution::default())
}

pub fn id_metrics_with(
    gt: &[Trajectory],
    pred: &[Trajectory],
    iou_threshold: f64,
    execution: Execution,
) -> Result<IdMetrics, MetricError> {
    check_threshold(iou_threshold)?;
    let gt_total: u64 = gt.iter().map(|t| t.len() as u64).sum();
    let pred_total: u64 = pred.iter().map(|t| t.len() as u64).sum();
    if gt_total + pred_total == 0 {
        return Err(MetricError::Undefined {
            metric: "idf1",
            reason: "both trajectory sets are empty",
        });
    }

    let overlap: Vec<Vec<u64>> = exec::map(execution, gt, |g| {
        pred.iter()
            .map(|p| co_located_frames(g, p, iou_threshold))
            .collect()
    });

    let (ng, np) = (gt.len(), pred.len());
    let n = ng + np;
    let mut costs = CostMatrix::forbidden(n, n);
    let set = |m: &mut CostMatrix, r, c, v: u64| m.set(r, c, v as f64).expect("finite");
    for (g, gt_traj) in gt.iter().enumerate() {
        for (p, pred_traj) in pred.iter().enumerate() {
            let cost = gt_traj.len() as u64 + pred_traj.len() as u64 - 2 * overlap[g][p];
            set(&mut costs, g, p, cost);
        }
        set(&mut costs, g, np + g, gt_traj.len() as u64);
    }
    for (p, pred_traj) in pred.iter().enumerate() {
        set(&mut costs, ng + p, p, pred_traj.len() as u64);
        for g in 0..ng {
            set(&mut costs, ng + p, np + g, 0);
        }
    }

    let idtp: u64 = solve_min_cost(&costs)
        .pairs
        .into_iter()
        .filter(|&(r, c)| r < ng && c < np)
        .map(|(g, p)| overlap[g][p])
        .sum();
    IdMetrics::from_counts(idtp, pred_total - idtp, gt_total - idtp)
}

/// Builds a report from accumulated counts. Metrics with a zero
/// denominator are reported as 0 and listed in `undefined`; fails only if
/// there is nothing at all to evaluate.
pub fn report_from_counts(
    counts: EvalCounts,
    convention: MotpConvention,
) -> Result<EvalReport, MetricError> {
    let ids = IdMetrics::from_counts(counts.idtp, counts.idfp, counts.idfn)?;
    let mut undefined = Vec::new();
    let mut or_flag = |r: Result<f64, MetricError>, name: &str| {
        r.unwrap_or_else(|_| {
            undefined.push(name.to_string());
            0.0
        })
    };
    let mota = or_flag(mota(&counts), "mota");
    let motp = or_flag(motp(&counts, convention), "motp");
    if !ids.idp_defined {
        undefined.push("idp".into());
    }
    if !ids.idr_defined {
        undefined.push("idr".into());
    }
    Ok(EvalReport {
        mota,
        motp,
        idf1: ids.idf1,
        idp: ids.idp,
        idr: ids.idr,
        motp_convention: convention,
        undefined,
        counts,
    })
}

/// Full evaluation of one sequence.
pub fn evaluate(
    gt: &[Trajectory],
    pred: &[Trajectory],
    config: &EvalConfig,
) -> Result<EvalReport, MetricError> {
    evaluate_with(gt, pred, config, Execution::default())
}

pub fn evaluate_with(
    gt: &[Trajectory],
    pred: &[Trajectory],
    config: &EvalConfig,
    execution: Execution,
) -> Result<EvalReport, MetricError> {
    let mut counts = clear_mot(gt, pred, config.iou_threshold)?;
    let ids = id_metrics_with(gt, pred, config.iou_threshold, execution)?;
    counts.idtp = ids.idtp;
    counts.idfp = ids.idfp;
    counts.idfn = ids.idfn;
    report_from_counts(counts, config.motp_convention)
}

/// Pools the counts of several sequences and recomputes every metric.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport, MetricError> {
    let convention = reports
        .first()
        .map_or(MotpConvention::default(), |r| r.motp_convention);
    let counts = reports.iter().fold(EvalCounts::default(), |mut acc, r| {
        acc.merge(&r.counts);
        acc
    });
    report_from_counts(counts, convention)
}
