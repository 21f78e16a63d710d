//! Min-cost bipartite assignment over rectangular matrices with forbidden
//! cells.
//!
//! The solver maximizes the number of matched pairs first, then minimizes
//! total cost among maximum matchings. Rectangular inputs are padded to a
//! square; forbidden and padded cells share one large cost so that every
//! such cell is strictly worse than any reachable real cost. After the
//! Hungarian pass the optimal dual is used to pick the lexicographically
//! smallest optimal assignment (lowest row first, then lowest column), so
//! ties never depend on scan order.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("cost at ({row}, {col}) is not finite: {value}")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("row {row} has {len} entries, expected {expected}")]
    Ragged {
        row: usize,
        len: usize,
        expected: usize,
    },
}

/// Row-major cost matrix. `None` marks a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<Option<f64>>,
}

impl CostMatrix {
    /// All cells forbidden.
    pub fn forbidden(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![None; rows * cols],
        }
    }

    pub fn from_fn<F>(rows: usize, cols: usize, mut f: F) -> Result<Self, AssignmentError>
    where
        F: FnMut(usize, usize) -> Option<f64>,
    {
        let mut m = Self::forbidden(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if let Some(v) = f(r, c) {
                    m.set(r, c, v)?;
                }
            }
        }
        Ok(m)
    }

    /// Dense matrix with no forbidden cells.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, Vec::len);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(AssignmentError::Ragged {
                    row,
                    len: r.len(),
                    expected: cols,
                });
            }
        }
        Self::from_fn(rows.len(), cols, |r, c| Some(rows[r][c]))
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) -> Result<(), AssignmentError> {
        if !value.is_finite() {
            return Err(AssignmentError::NonFinite { row, col, value });
        }
        self.cells[row * self.cols + col] = Some(value);
        Ok(())
    }

    pub fn forbid(&mut self, row: usize, col: usize) {
        self.cells[row * self.cols + col] = None;
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.cols + col]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    /// Sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Matching {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn total_cost(&self, costs: &CostMatrix) -> f64 {
        self.pairs
            .iter()
            .map(|&(r, c)| costs.get(r, c).expect("matching uses a forbidden cell"))
            .sum()
    }

    fn from_pairs(rows: usize, cols: usize, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &pairs {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            pairs,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }
}

/// Maximum-cardinality, minimum-cost matching over the allowed cells.
pub fn solve_min_cost(costs: &CostMatrix) -> Matching {
    let (rows, cols) = (costs.rows, costs.cols);
    if rows == 0 || cols == 0 || costs.cells.iter().all(Option::is_none) {
        return Matching::from_pairs(rows, cols, Vec::new());
    }

    let (lo, hi) = costs
        .cells
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    // Any set of k <= min(rows, cols) real pairs costs at most span * k after
    // shifting, so one extra null cell always outweighs it.
    let span = hi - lo;
    let null_cost = span * (rows.min(cols) as f64 + 1.0) + 1.0;

    let n = rows.max(cols);
    let mut square = vec![null_cost; n * n];
    for r in 0..rows {
        for c in 0..cols {
            if let Some(v) = costs.get(r, c) {
                square[r * n + c] = v - lo;
            }
        }
    }

    let (mut col_of_row, u, v) = hungarian(&square, n);
    let tol = 1e-9 * null_cost.max(1.0);
    let is_real = |r: usize, c: usize| r < rows && c < cols && costs.get(r, c).is_some();
    let tight = |r: usize, c: usize| square[r * n + c] - u[r] - v[c] <= tol;
    lexicographic_refine(n, &mut col_of_row, &tight, &is_real);

    let pairs = (0..rows)
        .filter_map(|r| {
            let c = col_of_row[r];
            is_real(r, c).then_some((r, c))
        })
        .collect();
    Matching::from_pairs(rows, cols, pairs)
}

/// Dense O(n^3) Hungarian algorithm with potentials. Returns the column
/// assigned to each row and the row/column duals.
fn hungarian(a: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based internally; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    (col_of_row, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites a perfect matching inside the equality subgraph into the
/// lexicographically smallest one, treating every null column (forbidden
/// or padding) as equivalent and ranked after all real columns.
fn lexicographic_refine<T, R>(n: usize, col_of_row: &mut [usize], tight: &T, is_real: &R)
where
    T: Fn(usize, usize) -> bool,
    R: Fn(usize, usize) -> bool,
{
    let mut row_of_col = vec![0usize; n];
    for (r, &c) in col_of_row.iter().enumerate() {
        row_of_col[c] = r;
    }
    let mut state = RefineState {
        col_of_row,
        row_of_col,
        locked: vec![false; n],
        fixed_null: vec![false; n],
    };

    for row in 0..n {
        let current = state.col_of_row[row];
        let current_real = is_real(row, current);
        for target in 0..n {
            if !is_real(row, target) {
                continue;
            }
            // Real columns beyond the current real one cannot improve.
            if current_real && target >= current {
                break;
            }
            if state.locked[target] || !tight(row, target) {
                continue;
            }
            if state.reroute(row, target, tight, is_real) {
                break;
            }
        }
        let chosen = state.col_of_row[row];
        if is_real(row, chosen) {
            state.locked[chosen] = true;
        } else {
            // Null columns are interchangeable, so a settled null row may
            // still hop to another null column later.
            state.fixed_null[row] = true;
        }
    }
}

struct RefineState<'a> {
    col_of_row: &'a mut [usize],
    row_of_col: Vec<usize>,
    locked: Vec<bool>,
    fixed_null: Vec<bool>,
}

impl RefineState<'_> {
    /// Moves `row` onto column `target` and finds an alternating path that
    /// rehomes the displaced row into the column `row` vacated, using only
    /// tight edges and unlocked columns. Rows after `row` move freely;
    /// settled null rows may only move between null columns.
    fn reroute<T, R>(&mut self, row: usize, target: usize, tight: &T, is_real: &R) -> bool
    where
        T: Fn(usize, usize) -> bool,
        R: Fn(usize, usize) -> bool,
    {
        let n = self.col_of_row.len();
        let freed = self.col_of_row[row];
        let displaced = self.row_of_col[target];
        let movable = |r: usize| r > row || (r < row && self.fixed_null[r]);
        if !movable(displaced) {
            return false;
        }

        // parent_of_col[c] = row that reached column c.
        let mut parent_of_col = vec![usize::MAX; n];
        let mut visited_row = vec![false; n];
        let mut queue = std::collections::VecDeque::from([displaced]);
        visited_row[displaced] = true;
        let mut found = false;
        #[allow(clippy::needless_range_loop)]
        'search: while let Some(r) = queue.pop_front() {
            for c in 0..n {
                if c == target
                    || self.locked[c]
                    || parent_of_col[c] != usize::MAX
                    || !tight(r, c)
                    || (self.fixed_null[r] && is_real(r, c))
                {
                    continue;
                }
                parent_of_col[c] = r;
                if c == freed {
                    found = true;
                    break 'search;
                }
                let next = self.row_of_col[c];
                if movable(next) && !visited_row[next] {
                    visited_row[next] = true;
                    queue.push_back(next);
                }
            }
        }
        if !found {
            return false;
        }

        // Walk back from the freed column, shifting each row along the path.
        let mut c = freed;
        loop {
            let r = parent_of_col[c];
            let prev = self.col_of_row[r];
            self.col_of_row[r] = c;
            self.row_of_col[c] = r;
            if r == displaced {
                break;
            }
            c = prev;
        }
        self.col_of_row[row] = target;
        self.row_of_col[target] = row;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_zeros() {
        let m = CostMatrix::from_rows(&[vec![0.0, 9.0], vec![9.0, 0.0]]).unwrap();
        let res = solve_min_cost(&m);
        assert_eq!(res.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(res.total_cost(&m), 0.0);
    }

    #[test]
    fn empty_side() {
        let m = CostMatrix::forbidden(1, 0);
        let res = solve_min_cost(&m);
        assert!(res.pairs.is_empty());
        assert_eq!(res.unmatched_rows, vec![0]);
        assert!(res.unmatched_cols.is_empty());
    }

    #[test]
    fn three_by_three_optimum() {
        let m = CostMatrix::from_rows(&[
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ])
        .unwrap();
        let res = solve_min_cost(&m);
        assert_eq!(res.pairs, vec![(0, 1), (1, 0), (2, 2)]);
        assert_eq!(res.total_cost(&m), 5.0);
    }

    #[test]
    fn cardinality_beats_cost() {
        // Taking the cheap (0,0) pair alone would leave row 1 unmatched.
        let mut m = CostMatrix::forbidden(2, 2);
        m.set(0, 0, 0.0).unwrap();
        m.set(0, 1, 100.0).unwrap();
        m.set(1, 0, 100.0).unwrap();
        let res = solve_min_cost(&m);
        assert_eq!(res.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn ties_prefer_lowest_row_then_column() {
        let m = CostMatrix::from_rows(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]).unwrap();
        assert_eq!(solve_min_cost(&m).pairs, vec![(0, 0), (1, 1), (2, 2)]);

        // Wide matrix: the single row takes the first of equal columns.
        let m = CostMatrix::from_rows(&[vec![2.0, 1.0, 1.0, 1.0]]).unwrap();
        let res = solve_min_cost(&m);
        assert_eq!(res.pairs, vec![(0, 1)]);
        assert_eq!(res.unmatched_cols, vec![0, 2, 3]);
    }

    #[test]
    fn rectangular_reports_unmatched() {
        let m = CostMatrix::from_rows(&[vec![5.0], vec![1.0], vec![3.0]]).unwrap();
        let res = solve_min_cost(&m);
        assert_eq!(res.pairs, vec![(1, 0)]);
        assert_eq!(res.unmatched_rows, vec![0, 2]);
    }

    #[test]
    fn all_forbidden() {
        let res = solve_min_cost(&CostMatrix::forbidden(3, 2));
        assert!(res.is_empty());
        assert_eq!(res.unmatched_rows, vec![0, 1, 2]);
        assert_eq!(res.unmatched_cols, vec![0, 1]);
    }

    #[test]
    fn negative_costs() {
        let m = CostMatrix::from_rows(&[vec![-5.0, -1.0], vec![-2.0, -9.0]]).unwrap();
        let res = solve_min_cost(&m);
        assert_eq!(res.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(res.total_cost(&m), -14.0);
    }

    #[test]
    fn rejects_non_finite() {
        let err = CostMatrix::from_rows(&[vec![f64::INFINITY]]).unwrap_err();
        assert!(matches!(
            err,
            AssignmentError::NonFinite { row: 0, col: 0, .. }
        ));
        let err = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, AssignmentError::Ragged { row: 1, .. }));
    }
}
