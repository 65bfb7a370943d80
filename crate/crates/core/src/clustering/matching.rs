//! Minimum-cost perfect matching on a square cost matrix.

use crate::error::{Error, Result};

/// Optimal assignment cost and row→column assignment, O(n³) shortest
/// augmenting paths with potentials.
fn hungarian(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of_col[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
    (total, assignment)
}

fn validate(cost: &[Vec<f64>]) -> Result<()> {
    let n = cost.len();
    for (r, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidCostMatrix(format!(
                "row {r} has {} entries, expected {n}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCostMatrix(format!("row {r} has a non-finite entry")));
        }
    }
    Ok(())
}

/// Permutation `σ` (row `j` → column `σ[j]`) minimizing `Σ cost[j][σ[j]]`.
/// Among optimal permutations the lexicographically smallest is returned.
pub fn min_cost_matching(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    validate(cost)?;
    let n = cost.len();
    let (optimum, _) = hungarian(cost);
    let scale = cost.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale * n as f64;

    let mut sigma = Vec::with_capacity(n);
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut fixed_cost = 0.0;
    for row in 0..n {
        let mut chosen = None;
        for (pos, &col) in free_cols.iter().enumerate() {
            let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&c| c != col).collect();
            let sub: Vec<Vec<f64>> = ((row + 1)..n)
                .map(|r| rest_cols.iter().map(|&c| cost[r][c]).collect())
                .collect();
            let (rest, _) = hungarian(&sub);
            if fixed_cost + cost[row][col] + rest <= optimum + tol {
                chosen = Some(pos);
                break;
            }
        }
        // The optimum is always reachable; fall back to the first column only
        // if rounding rejected every candidate.
        let pos = chosen.unwrap_or(0);
        let col = free_cols.remove(pos);
        fixed_cost += cost[row][col];
        sigma.push(col);
    }
    Ok(sigma)
}

pub fn assignment_cost(cost: &[Vec<f64>], sigma: &[usize]) -> f64 {
    sigma.iter().enumerate().map(|(r, &c)| cost[r][c]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
            if cur.len() == used.len() {
                out.push(cur.clone());
                return;
            }
            for i in 0..used.len() {
                if !used[i] {
                    used[i] = true;
                    cur.push(i);
                    rec(cur, used, out);
                    cur.pop();
                    used[i] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; n], &mut out);
        out
    }

    #[test]
    fn three_by_three_example() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let best = permutations(3)
            .into_iter()
            .map(|p| assignment_cost(&cost, &p))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, 5.0);
        let sigma = min_cost_matching(&cost).unwrap();
        assert_eq!(sigma, vec![1, 0, 2]);
        assert_eq!(assignment_cost(&cost, &sigma), 5.0);
    }

    #[test]
    fn diagonal_dominant_is_identity() {
        let cost = vec![vec![0.1, 0.9, 0.8], vec![0.7, 0.2, 0.9], vec![0.6, 0.8, 0.3]];
        assert_eq!(min_cost_matching(&cost).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let cost = vec![vec![1.0; 3]; 3];
        assert_eq!(min_cost_matching(&cost).unwrap(), vec![0, 1, 2]);
        let cost = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(min_cost_matching(&cost).unwrap(), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(min_cost_matching(&[vec![1.0, 2.0]]).is_err());
        assert!(min_cost_matching(&[vec![f64::NAN]]).is_err());
        assert_eq!(min_cost_matching(&[]).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn matches_brute_force_on_integer_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = crate::rng::SimRng::seed_from_u64(17);
        for n in 1..=6 {
            let perms = permutations(n);
            for _ in 0..50 {
                let cost: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.random_range(0..5) as f64).collect())
                    .collect();
                let brute = perms
                    .iter()
                    .min_by(|a, b| assignment_cost(&cost, a).total_cmp(&assignment_cost(&cost, b)))
                    .unwrap();
                assert_eq!(&min_cost_matching(&cost).unwrap(), brute);
            }
        }
    }
}
