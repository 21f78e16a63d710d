mod common;

use common::{brute_force_assignment, max_matching_size};
use fishtrack_core::assignment::{solve_min_cost, CostMatrix};
use proptest::prelude::*;

/// Integer-valued costs keep sums exact. `None` is forbidden.
fn matrix(forbid: bool) -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    (0usize..=6, 0usize..=6).prop_flat_map(move |(r, c)| {
        let cell = if forbid {
            prop_oneof![3 => (0u32..20).prop_map(|v| Some(v as f64)), 1 => Just(None)].boxed()
        } else {
            (0u32..20).prop_map(|v| Some(v as f64)).boxed()
        };
        proptest::collection::vec(proptest::collection::vec(cell, c), r)
    })
}

fn to_cost_matrix(cells: &[Vec<Option<f64>>]) -> CostMatrix {
    let rows = cells.len();
    let cols = cells.first().map_or(0, Vec::len);
    CostMatrix::from_fn(rows, cols, |r, c| cells[r][c]).unwrap()
}

proptest! {
    #[test]
    fn matches_exhaustive_optimum(cells in matrix(true)) {
        let cols = cells.first().map_or(0, Vec::len);
        let m = to_cost_matrix(&cells);
        let got = solve_min_cost(&m);
        let (card, cost, assignment) = brute_force_assignment(&cells, cols);
        prop_assert_eq!(got.len(), card);
        prop_assert_eq!(got.total_cost(&m), cost);
        let expected: Vec<(usize, usize)> = assignment
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
            .collect();
        prop_assert_eq!(&got.pairs, &expected);
    }

    #[test]
    fn matching_is_valid_and_maximum(cells in matrix(true)) {
        let cols = cells.first().map_or(0, Vec::len);
        let m = to_cost_matrix(&cells);
        let got = solve_min_cost(&m);
        let allowed: Vec<Vec<bool>> = cells.iter().map(|r| r.iter().map(Option::is_some).collect()).collect();
        prop_assert_eq!(got.len(), max_matching_size(&allowed, cols));
        let mut rows_seen = vec![false; cells.len()];
        let mut cols_seen = vec![false; cols];
        for &(r, c) in &got.pairs {
            prop_assert!(cells[r][c].is_some());
            prop_assert!(!rows_seen[r] && !cols_seen[c]);
            rows_seen[r] = true;
            cols_seen[c] = true;
        }
        prop_assert_eq!(got.unmatched_rows.len() + got.len(), cells.len());
        prop_assert_eq!(got.unmatched_cols.len() + got.len(), cols);
    }

    #[test]
    fn row_permutation_preserves_optimum(cells in matrix(false), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<usize> = (0..cells.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<Vec<Option<f64>>> = perm.iter().map(|&i| cells[i].clone()).collect();
        let a = to_cost_matrix(&cells);
        let b = to_cost_matrix(&permuted);
        let (ma, mb) = (solve_min_cost(&a), solve_min_cost(&b));
        prop_assert_eq!(ma.total_cost(&a), mb.total_cost(&b));
        prop_assert_eq!(ma.len(), mb.len());
    }

    #[test]
    fn deterministic(cells in matrix(true)) {
        let m = to_cost_matrix(&cells);
        prop_assert_eq!(solve_min_cost(&m), solve_min_cost(&m));
    }
}
