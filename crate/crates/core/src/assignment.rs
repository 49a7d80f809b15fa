//! Maximum-affinity bipartite matching with a positivity gate.

use crate::Scalar;

/// Dense `rows × cols` score matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> AffinityMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "affinity matrix shape mismatch");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }
}

/// A partial one-to-one assignment of rows to columns.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    /// Sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Matching {
    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|(r, _)| *r == row).map(|(_, c)| *c)
    }

    pub fn row_of(&self, col: usize) -> Option<usize> {
        self.pairs.iter().find(|(_, c)| *c == col).map(|(r, _)| *r)
    }

    pub fn total<T: Scalar>(&self, m: &AffinityMatrix<T>) -> T {
        self.pairs.iter().map(|&(i, j)| m.get(i, j)).sum()
    }
}

/// Optimal assignment over entries strictly greater than `min_affinity`.
///
/// Pairs at or below the gate, and pairs that cannot raise the total (non-positive
/// entries), are reported unmatched. Among optimal assignments the one whose
/// row-sorted pair list is lexicographically smallest is returned.
pub fn solve<T: Scalar>(matrix: &AffinityMatrix<T>, min_affinity: T) -> Matching {
    let (rows, cols) = (matrix.rows, matrix.cols);
    let profit = |i: usize, j: usize| {
        let a = matrix.get(i, j);
        if a > min_affinity && a > T::zero() {
            a
        } else {
            T::zero()
        }
    };
    let w: Vec<Vec<T>> = (0..rows).map(|i| (0..cols).map(|j| profit(i, j)).collect()).collect();

    let scale: T = w.iter().flatten().copied().fold(T::zero(), |acc, x| acc + x);
    let tol = T::epsilon() * T::lit(256.0) * (T::one() + scale);

    let mut col_free = vec![true; cols];
    let mut remaining = max_weight(&w, 0, &col_free);
    let mut pairs = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if !col_free[j] || w[i][j] <= T::zero() {
                continue;
            }
            col_free[j] = false;
            let rest = max_weight(&w, i + 1, &col_free);
            if w[i][j] + rest >= remaining - tol {
                pairs.push((i, j));
                remaining = rest;
                break;
            }
            col_free[j] = true;
        }
    }
    let unmatched_rows = (0..rows).filter(|r| !pairs.iter().any(|(pr, _)| pr == r)).collect();
    let unmatched_cols = (0..cols).filter(|c| col_free[*c]).collect();
    Matching { pairs, unmatched_rows, unmatched_cols }
}

/// Maximum total weight of rows `first_row..` against the free columns.
fn max_weight<T: Scalar>(w: &[Vec<T>], first_row: usize, col_free: &[bool]) -> T {
    let cols: Vec<usize> = (0..col_free.len()).filter(|&c| col_free[c]).collect();
    let rows = w.len().saturating_sub(first_row);
    if rows == 0 || cols.is_empty() {
        return T::zero();
    }
    let sub = |i: usize, j: usize| w[first_row + i][cols[j]];
    // Hungarian needs rows <= cols; transpose otherwise.
    let (n, m, cost): (usize, usize, CostFn<'_, T>) = if rows <= cols.len() {
        (rows, cols.len(), Box::new(move |i, j| -sub(i, j)))
    } else {
        (cols.len(), rows, Box::new(move |i, j| -sub(j, i)))
    };
    let assignment = hungarian_min(n, m, &*cost);
    -assignment.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<T>()
}

type CostFn<'a, T> = Box<dyn Fn(usize, usize) -> T + 'a>;

/// Shortest augmenting path Hungarian method for an `n × m` cost matrix with
/// `n <= m`. Returns the column assigned to each row.
fn hungarian_min<T: Scalar>(n: usize, m: usize, cost: &dyn Fn(usize, usize) -> T) -> Vec<usize> {
    debug_assert!(n <= m);
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    // p[j]: row (1-based) matched to column j; way[j]: previous column on the path
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
