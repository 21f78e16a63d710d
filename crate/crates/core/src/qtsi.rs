//! Query time-sequence intersection.
//!
//! For every real (ground-truth) box the best-overlapping detect query and
//! the best-overlapping track query compete; the stronger one is carried
//! into the next frame's track-query set when its IOU exceeds the
//! configured threshold. The carried set is then unioned with the queries
//! that were newly matched this frame.
//!
//! Competition is one-to-one: a query can be carried for at most one real
//! box. Real boxes are settled greedily, highest winning score first, and
//! each box's maxima are recomputed over the queries still available. A
//! detect candidate's score is its IOU plus `tie_margin`, so detect queries
//! win ties against track queries.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BoundingBox};
use crate::TrackId;

#[derive(Debug, Error, PartialEq)]
pub enum QtsiError {
    #[error("iou threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("tie margin must be finite and non-negative, got {0}")]
    InvalidTieMargin(f64),
    #[error("track query {index} has no identity")]
    TrackWithoutIdentity { index: usize },
    #[error("query confidence {confidence} outside [0, 1]")]
    InvalidConfidence { confidence: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    Detect,
    Track,
}

/// Opaque per-query feature handle. Passed through untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PayloadHandle(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    pub bbox: BoundingBox,
    pub identity: Option<TrackId>,
    pub confidence: f64,
    pub payload: PayloadHandle,
}

impl Query {
    pub fn detect(bbox: BoundingBox, confidence: f64) -> Self {
        Self {
            kind: QueryKind::Detect,
            bbox,
            identity: None,
            confidence,
            payload: PayloadHandle::default(),
        }
    }

    pub fn track(bbox: BoundingBox, identity: TrackId, confidence: f64) -> Self {
        Self {
            kind: QueryKind::Track,
            bbox,
            identity: Some(identity),
            confidence,
            payload: PayloadHandle::default(),
        }
    }

    pub fn with_payload(mut self, payload: PayloadHandle) -> Self {
        self.payload = payload;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QtsiConfig {
    pub iou_threshold: f64,
    pub tie_margin: f64,
}

impl Default for QtsiConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            tie_margin: 0.0,
        }
    }
}

impl QtsiConfig {
    pub fn validate(&self) -> Result<(), QtsiError> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(QtsiError::InvalidThreshold(self.iou_threshold));
        }
        if !self.tie_margin.is_finite() || self.tie_margin < 0.0 {
            return Err(QtsiError::InvalidTieMargin(self.tie_margin));
        }
        Ok(())
    }
}

/// Position of a query in one of the three input lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryRef {
    Detect(usize),
    Track(usize),
    NewMatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionSource {
    FromDetect,
    FromTrack,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QtsiDecision {
    pub real_index: usize,
    pub winner: Option<QueryRef>,
    /// IOU of the winner, or the best IOU seen when unmatched.
    pub iou: f64,
    pub source: DecisionSource,
    /// Identity handed from a displaced track query to a winning detect query.
    pub inherited_identity: Option<TrackId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedQuery {
    pub origin: QueryRef,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QtsiOutcome {
    /// Carried queries in real-box order, followed by new matches.
    pub merged: Vec<MergedQuery>,
    /// One decision per real box, in input order.
    pub decisions: Vec<QtsiDecision>,
}

fn validate_inputs(detect: &[Query], track: &[Query], new: &[Query]) -> Result<(), QtsiError> {
    if let Some(index) = track.iter().position(|q| q.identity.is_none()) {
        return Err(QtsiError::TrackWithoutIdentity { index });
    }
    for q in detect.iter().chain(track).chain(new) {
        if !(0.0..=1.0).contains(&q.confidence) {
            return Err(QtsiError::InvalidConfidence {
                confidence: q.confidence,
            });
        }
    }
    Ok(())
}

/// A (real box, query) pairing ranked for the greedy competition.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    real: usize,
    query: QueryRef,
    iou: f64,
    score: f64,
}

/// Ranking of candidates: higher score first, detect before track, then
/// lower real index, then lower query index.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| kind_order(a, b))
        .then_with(|| a.real.cmp(&b.real))
        .then_with(|| a.query.cmp(&b.query))
}

fn kind_order(a: &Candidate, b: &Candidate) -> Ordering {
    let k = |c: &Candidate| matches!(c.query, QueryRef::Track(_)) as u8;
    k(a).cmp(&k(b))
}

/// Best still-available query of one kind for a real box (steps 1 and 2:
/// the MIOU against that query set).
fn best_of(
    real: usize,
    boxes: &[BoundingBox],
    ious: &[Vec<f64>],
    taken: &[bool],
    make_ref: fn(usize) -> QueryRef,
    bonus: f64,
) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for qi in 0..boxes.len() {
        if taken[qi] {
            continue;
        }
        let v = ious[real][qi];
        if best.is_none_or(|b| v > b.iou) {
            best = Some(Candidate {
                real,
                query: make_ref(qi),
                iou: v,
                score: v + bonus,
            });
        }
    }
    best
}

/// Runs the query merge for one frame.
pub fn qtsi_merge(
    detect_queries: &[Query],
    track_queries: &[Query],
    real_boxes: &[BoundingBox],
    new_match_queries: &[Query],
    config: &QtsiConfig,
) -> Result<QtsiOutcome, QtsiError> {
    config.validate()?;
    validate_inputs(detect_queries, track_queries, new_match_queries)?;

    let det_boxes: Vec<BoundingBox> = detect_queries.iter().map(|q| q.bbox).collect();
    let trk_boxes: Vec<BoundingBox> = track_queries.iter().map(|q| q.bbox).collect();
    let det_iou: Vec<Vec<f64>> = real_boxes
        .iter()
        .map(|r| det_boxes.iter().map(|d| iou(r, d)).collect())
        .collect();
    let trk_iou: Vec<Vec<f64>> = real_boxes
        .iter()
        .map(|r| trk_boxes.iter().map(|t| iou(r, t)).collect())
        .collect();

    let mut det_taken = vec![false; detect_queries.len()];
    let mut trk_taken = vec![false; track_queries.len()];
    let mut settled = vec![false; real_boxes.len()];
    let mut decisions: Vec<QtsiDecision> = (0..real_boxes.len())
        .map(|real| {
            let seen = det_iou[real]
                .iter()
                .chain(&trk_iou[real])
                .copied()
                .fold(0.0, f64::max);
            QtsiDecision {
                real_index: real,
                winner: None,
                iou: seen,
                source: DecisionSource::Unmatched,
                inherited_identity: None,
            }
        })
        .collect();
    // Order in which detect winners were settled, for identity hand-off.
    let mut detect_wins: Vec<(usize, usize)> = Vec::new();

    loop {
        // Step 3: per real box, the stronger of the two maxima; globally the
        // strongest box is settled first.
        let mut pick: Option<Candidate> = None;
        for real in (0..real_boxes.len()).filter(|&r| !settled[r]) {
            let det = best_of(
                real,
                &det_boxes,
                &det_iou,
                &det_taken,
                QueryRef::Detect,
                config.tie_margin,
            );
            let trk = best_of(real, &trk_boxes, &trk_iou, &trk_taken, QueryRef::Track, 0.0);
            for cand in [det, trk].into_iter().flatten() {
                if cand.iou <= config.iou_threshold {
                    continue;
                }
                if pick.is_none_or(|p| rank(&cand, &p) == Ordering::Less) {
                    pick = Some(cand);
                }
            }
        }
        let Some(win) = pick else { break };

        settled[win.real] = true;
        let decision = &mut decisions[win.real];
        decision.winner = Some(win.query);
        decision.iou = win.iou;
        match win.query {
            QueryRef::Detect(i) => {
                det_taken[i] = true;
                decision.source = DecisionSource::FromDetect;
                detect_wins.push((win.real, i));
            }
            QueryRef::Track(i) => {
                trk_taken[i] = true;
                decision.source = DecisionSource::FromTrack;
            }
            QueryRef::NewMatch(_) => unreachable!("new matches do not compete"),
        }
    }

    // A track query that overlapped a detect winner's real box but was not
    // carried itself hands its identity to that detect query.
    let mut donated = trk_taken.clone();
    for &(real, _) in &detect_wins {
        let donor = (0..track_queries.len())
            .filter(|&t| !donated[t] && trk_iou[real][t] > config.iou_threshold)
            .max_by(|&a, &b| {
                trk_iou[real][a]
                    .total_cmp(&trk_iou[real][b])
                    .then_with(|| b.cmp(&a))
            });
        if let Some(t) = donor {
            donated[t] = true;
            decisions[real].inherited_identity = track_queries[t].identity;
        }
    }

    let mut merged: Vec<MergedQuery> = Vec::new();
    for decision in &decisions {
        let Some(origin) = decision.winner else {
            continue;
        };
        let mut query = match origin {
            QueryRef::Detect(i) => detect_queries[i].clone(),
            QueryRef::Track(i) => track_queries[i].clone(),
            QueryRef::NewMatch(_) => unreachable!(),
        };
        if let Some(id) = decision.inherited_identity {
            query.identity = Some(id);
        }
        merged.push(MergedQuery { origin, query });
    }
    let carried = merged.len();
    for (i, q) in new_match_queries.iter().enumerate() {
        let duplicate = merged.iter().any(|m| &m.query == q)
            || merged[..carried].iter().any(|m| {
                let source = match m.origin {
                    QueryRef::Detect(j) => &detect_queries[j],
                    QueryRef::Track(j) => &track_queries[j],
                    QueryRef::NewMatch(_) => unreachable!(),
                };
                source == q
            });
        if !duplicate {
            merged.push(MergedQuery {
                origin: QueryRef::NewMatch(i),
                query: q.clone(),
            });
        }
    }

    Ok(QtsiOutcome { merged, decisions })
}
