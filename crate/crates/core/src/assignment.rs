//! Minimum-cost bipartite assignment (Kuhn-Munkres with row/column potentials).

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Solves the linear assignment problem for `cost`, returning `(row, col)` pairs
/// sorted by row.
///
/// Rectangular inputs assign every row of the smaller side; the surplus rows or
/// columns are left out of the result. Equal-cost alternatives resolve toward the
/// lowest column index.
pub fn hungarian_assignment<T: Scalar>(cost: &Matrix<T>) -> Result<Vec<(usize, usize)>> {
    if !cost.is_finite() {
        return Err(Error::validation("assignment cost matrix is not finite"));
    }
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    if rows > cols {
        let mut pairs: Vec<(usize, usize)> = solve(&cost.transpose())
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        return Ok(pairs);
    }
    Ok(solve(cost))
}

/// Requires `rows <= cols`. Indices are 1-based internally, column 0 is the
/// virtual start column.
fn solve<T: Scalar>(cost: &Matrix<T>) -> Vec<(usize, usize)> {
    let (n, m) = cost.shape();
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    // match_col[j] = row (1-based) assigned to column j, 0 if free
    let mut match_col = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        match_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = match_col[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[match_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if match_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| match_col[j] != 0)
        .map(|j| (match_col[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Total cost of an assignment.
pub fn assignment_cost<T: Scalar>(cost: &Matrix<T>, pairs: &[(usize, usize)]) -> T {
    pairs.iter().map(|&(r, c)| cost[(r, c)]).sum()
}
