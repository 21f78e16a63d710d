//! Brute-force oracles and random instance generators shared by the
//! integration tests. Nothing here calls the solver paths it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use fishtrack_core::geometry::{iou, BoundingBox};
use fishtrack_core::metrics::Trajectory;
use fishtrack_core::qtsi::{Query, QueryRef};
use fishtrack_core::TrackId;
use rand::Rng;

pub fn rand_box<R: Rng>(rng: &mut R, extent: f64, min_side: f64, max_side: f64) -> BoundingBox {
    BoundingBox::new(
        rng.gen_range(0.0..extent),
        rng.gen_range(0.0..extent),
        rng.gen_range(min_side..max_side),
        rng.gen_range(min_side..max_side),
    )
    .unwrap()
}

/// Exhaustive optimum over partial injective assignments of rows to
/// columns. Returns `(cardinality, cost, col_of_row)` for the best
/// assignment: most pairs, then least cost, then lexicographically
/// smallest with "unassigned" ranked after every column.
pub fn brute_force_assignment(
    costs: &[Vec<Option<f64>>],
    cols: usize,
) -> (usize, f64, Vec<Option<usize>>) {
    fn key(a: &[Option<usize>]) -> Vec<usize> {
        a.iter().map(|c| c.unwrap_or(usize::MAX)).collect()
    }
    fn rec(
        row: usize,
        costs: &[Vec<Option<f64>>],
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        card: usize,
        cost: f64,
        best: &mut Option<(usize, f64, Vec<Option<usize>>)>,
    ) {
        if row == costs.len() {
            let better = match best {
                None => true,
                Some((bc, bcost, ba)) => {
                    card > *bc
                        || (card == *bc && cost < *bcost)
                        || (card == *bc && cost == *bcost && key(current) < key(ba))
                }
            };
            if better {
                *best = Some((card, cost, current.clone()));
            }
            return;
        }
        for c in 0..used.len() {
            if used[c] {
                continue;
            }
            if let Some(v) = costs[row][c] {
                used[c] = true;
                current.push(Some(c));
                rec(row + 1, costs, used, current, card + 1, cost + v, best);
                current.pop();
                used[c] = false;
            }
        }
        current.push(None);
        rec(row + 1, costs, used, current, card, cost, best);
        current.pop();
    }
    let mut best = None;
    rec(
        0,
        costs,
        &mut vec![false; cols],
        &mut Vec::new(),
        0,
        0.0,
        &mut best,
    );
    best.unwrap()
}

/// Maximum bipartite matching size by Kuhn's augmenting paths.
pub fn max_matching_size(allowed: &[Vec<bool>], cols: usize) -> usize {
    fn augment(
        r: usize,
        allowed: &[Vec<bool>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for c in 0..seen.len() {
            if allowed[r][c] && !seen[c] {
                seen[c] = true;
                if owner[c].is_none_or(|o| augment(o, allowed, seen, owner)) {
                    owner[c] = Some(r);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; cols];
    (0..allowed.len())
        .filter(|&r| augment(r, allowed, &mut vec![false; cols], &mut owner))
        .count()
}

/// QTSI winners by sorting every (real, query) pair once and sweeping
/// greedily.
pub fn qtsi_oracle(
    detect: &[Query],
    track: &[Query],
    real: &[BoundingBox],
    threshold: f64,
    tie_margin: f64,
) -> Vec<Option<QueryRef>> {
    // (score, kind rank, real, query index, ref)
    let mut pairs: Vec<(f64, u8, usize, usize, QueryRef)> = Vec::new();
    for (r, rb) in real.iter().enumerate() {
        for (i, q) in detect.iter().enumerate() {
            let v = iou(rb, &q.bbox);
            if v > threshold {
                pairs.push((v + tie_margin, 0, r, i, QueryRef::Detect(i)));
            }
        }
        for (i, q) in track.iter().enumerate() {
            let v = iou(rb, &q.bbox);
            if v > threshold {
                pairs.push((v, 1, r, i, QueryRef::Track(i)));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let mut winners = vec![None; real.len()];
    let mut used: BTreeSet<QueryRef> = BTreeSet::new();
    for (_, _, r, _, q) in pairs {
        if winners[r].is_none() && !used.contains(&q) {
            winners[r] = Some(q);
            used.insert(q);
        }
    }
    winners
}

/// Identity metrics by enumerating every one-to-one pairing of GT and
/// predicted identities. Returns `(IDTP, IDFP, IDFN)`.
pub fn brute_force_id_counts(
    gt: &[Trajectory],
    pred: &[Trajectory],
    threshold: f64,
) -> (u64, u64, u64) {
    let overlap = |g: &Trajectory, p: &Trajectory| -> u64 {
        let mut n = 0;
        for (f, gb) in &g.boxes {
            for (pf, pb) in &p.boxes {
                if f == pf && iou(gb, pb) > threshold {
                    n += 1;
                }
            }
        }
        n
    };
    fn rec(g: usize, ov: &[Vec<u64>], used: &mut Vec<bool>, acc: u64, best: &mut u64) {
        if g == ov.len() {
            *best = (*best).max(acc);
            return;
        }
        rec(g + 1, ov, used, acc, best);
        for p in 0..used.len() {
            if !used[p] {
                used[p] = true;
                rec(g + 1, ov, used, acc + ov[g][p], best);
                used[p] = false;
            }
        }
    }
    let ov: Vec<Vec<u64>> = gt
        .iter()
        .map(|g| pred.iter().map(|p| overlap(g, p)).collect())
        .collect();
    let mut best = 0;
    rec(0, &ov, &mut vec![false; pred.len()], 0, &mut best);
    let gt_total: u64 = gt.iter().map(|t| t.len() as u64).sum();
    let pred_total: u64 = pred.iter().map(|t| t.len() as u64).sum();
    (best, pred_total - best, gt_total - best)
}

/// Random micro-sequence of up to `max_ids` identities over `frames`
/// frames. Boxes come from a small grid so overlaps are frequent.
pub fn rand_trajectories<R: Rng>(rng: &mut R, max_ids: usize, frames: u64) -> Vec<Trajectory> {
    let n = rng.gen_range(0..=max_ids);
    (0..n)
        .map(|i| {
            let boxes = (1..=frames).filter_map(|f| {
                if rng.gen_bool(0.7) {
                    let x = rng.gen_range(0..4) as f64 * 4.0;
                    Some((f, BoundingBox::new(x, 0.0, 10.0, 10.0).unwrap()))
                } else {
                    None
                }
            });
            Trajectory::with_boxes(TrackId(i as u64 + 1), boxes.collect::<Vec<_>>())
        })
        .collect()
}
