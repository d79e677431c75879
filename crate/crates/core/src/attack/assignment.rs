//! Exact rectangular linear assignment by shortest augmenting paths
//! (Hungarian method with row/column potentials), O(rows² · cols).

/// Assigns every row to a distinct column minimising the summed cost.
/// Requires `rows <= cols`. Returns the column chosen for each row.
pub fn solve<F>(rows: usize, cols: usize, cost: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> f64,
{
    assert!(
        rows <= cols,
        "assignment needs rows <= cols ({rows} > {cols})"
    );
    if rows == 0 {
        return Vec::new();
    }
    // 1-based with a virtual column 0, as in the classic formulation
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv = vec![f64::INFINITY; cols + 1];
    let mut used = vec![false; cols + 1];

    for row in 1..=rows {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(costs: &[Vec<f64>], a: &[usize]) -> f64 {
        a.iter().enumerate().map(|(i, j)| costs[i][*j]).sum()
    }

    fn best_by_enumeration(costs: &[Vec<f64>]) -> f64 {
        fn go(costs: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == costs.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    go(costs, row + 1, used, acc + costs[row][j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        go(costs, 0, &mut vec![false; costs[0].len()], 0.0, &mut best);
        best
    }

    #[test]
    fn small_square() {
        let costs = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let a = solve(3, 3, |i, j| costs[i][j]);
        assert_eq!(total(&costs, &a), 5.0);
    }

    #[test]
    fn rectangular_matches_enumeration() {
        let costs = vec![
            vec![7.0, 3.0, 9.0, 1.0, 4.0],
            vec![2.0, 8.0, 1.0, 6.0, 5.0],
            vec![5.0, 5.0, 5.0, 2.0, 0.5],
        ];
        let a = solve(3, 5, |i, j| costs[i][j]);
        let mut cols = a.clone();
        cols.sort_unstable();
        cols.dedup();
        assert_eq!(cols.len(), 3);
        assert_eq!(total(&costs, &a), best_by_enumeration(&costs));
    }

    #[test]
    fn empty_problem() {
        assert!(solve(0, 4, |_, _| 0.0).is_empty());
    }
}
