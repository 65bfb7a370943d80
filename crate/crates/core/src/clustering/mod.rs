//! Server-side client grouping: k-means over loss vectors, minimum-cost
//! matching of new clusters to existing models, and assignment purity.

mod kmeans;
mod matching;
mod pca;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, KMeansResult, DEFAULT_MAX_ITER};
pub use matching::{assignment_cost, min_cost_matching};
pub use pca::pca_project;

use crate::error::{Error, Result};

/// Reconstruction loss of one client's benign data under each of the K models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    pub client_id: usize,
    pub values: Vec<f64>,
}

/// client_id → cluster index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClusterAssignment(pub BTreeMap<usize, usize>);

impl ClusterAssignment {
    pub fn get(&self, client_id: usize) -> Option<usize> {
        self.0.get(&client_id).copied()
    }

    pub fn insert(&mut self, client_id: usize, cluster: usize) {
        self.0.insert(client_id, cluster);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Members of cluster `j` in ascending client order.
    pub fn members(&self, j: usize) -> Vec<usize> {
        self.0.iter().filter(|(_, &c)| c == j).map(|(&id, _)| id).collect()
    }

    /// Renames cluster `j` to `sigma[j]`.
    pub fn relabel(&self, sigma: &[usize]) -> Self {
        Self(self.0.iter().map(|(&id, &c)| (id, sigma[c])).collect())
    }
}

/// K-means over loss vectors; returns the assignment and the centroids.
pub fn cluster_loss_vectors(
    vectors: &[LossVector],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(ClusterAssignment, Vec<Vec<f64>>)> {
    let points: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    let result = kmeans(&points, k, seed, max_iter)?;
    let assignment = ClusterAssignment(
        vectors
            .iter()
            .zip(&result.labels)
            .map(|(v, &l)| (v.client_id, l))
            .collect(),
    );
    Ok((assignment, result.centroids))
}

/// `cost[j][j']` is the mean of component `j'` over the loss vectors of the
/// clients in new cluster `j`. Rows of empty clusters are filled with a
/// value above every other entry.
pub fn build_match_cost(assignment: &ClusterAssignment, vectors: &[LossVector], k: usize) -> Result<Vec<Vec<f64>>> {
    let mut sums = vec![vec![0.0; k]; k];
    let mut counts = vec![0usize; k];
    for v in vectors {
        if v.values.len() != k {
            return Err(Error::shape("loss vector", k, v.values.len()));
        }
        let j = assignment
            .get(v.client_id)
            .ok_or_else(|| Error::Config(format!("client {} has no cluster", v.client_id)))?;
        if j >= k {
            return Err(Error::Config(format!("cluster index {j} outside 0..{k}")));
        }
        counts[j] += 1;
        for (s, x) in sums[j].iter_mut().zip(&v.values) {
            *s += x;
        }
    }
    let mut cost: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(row, &n)| {
            if n == 0 {
                row
            } else {
                row.into_iter().map(|s| s / n as f64).collect()
            }
        })
        .collect();
    let top = cost
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .flat_map(|(r, _)| r.iter().copied())
        .fold(0.0_f64, f64::max);
    for (row, &n) in cost.iter_mut().zip(&counts) {
        if n == 0 {
            row.iter_mut().for_each(|x| *x = top + 1.0);
        }
    }
    Ok(cost)
}

/// Fraction of items whose predicted group matches the true group under the
/// best one-to-one relabeling of predicted groups.
pub fn assignment_purity(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 1.0;
    }
    let size = predicted.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    let mut counts = vec![vec![0.0; size]; size];
    for (&p, &t) in predicted.iter().zip(truth) {
        counts[p][t] += 1.0;
    }
    let cost: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|c| -c).collect()).collect();
    let sigma = min_cost_matching(&cost).expect("finite square contingency table");
    let matched: f64 = sigma.iter().enumerate().map(|(p, &t)| counts[p][t]).sum();
    matched / predicted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(id: usize, values: &[f64]) -> LossVector {
        LossVector {
            client_id: id,
            values: values.to_vec(),
        }
    }

    #[test]
    fn one_client_per_cluster_rows_are_vectors() {
        let vectors = vec![
            lv(0, &[0.1, 0.5, 0.9]),
            lv(1, &[0.4, 0.2, 0.7]),
            lv(2, &[0.3, 0.3, 0.3]),
        ];
        let a = ClusterAssignment((0..3).map(|i| (i, i)).collect());
        let cost = build_match_cost(&a, &vectors, 3).unwrap();
        for i in 0..3 {
            assert_eq!(cost[i], vectors[i].values);
        }
    }

    #[test]
    fn cost_rows_are_member_means() {
        let vectors = vec![
            lv(3, &[1.0, 4.0, 2.0]),
            lv(5, &[3.0, 0.0, 6.0]),
            lv(7, &[0.5, 0.5, 0.5]),
            lv(9, &[2.0, 2.0, 8.0]),
        ];
        let a = ClusterAssignment([(3, 1), (5, 1), (7, 0), (9, 1)].into_iter().collect());
        let cost = build_match_cost(&a, &vectors, 3).unwrap();
        assert_eq!(cost[0], vec![0.5, 0.5, 0.5]);
        assert_eq!(cost[1], vec![2.0, 2.0, 16.0 / 3.0]);
        assert!(cost[2].iter().all(|&x| x == 16.0 / 3.0 + 1.0));
    }

    #[test]
    fn diagonal_members_match_identity() {
        let vectors = vec![lv(0, &[0.1, 0.9]), lv(1, &[0.2, 0.8]), lv(2, &[0.9, 0.1])];
        let a = ClusterAssignment([(0, 0), (1, 0), (2, 1)].into_iter().collect());
        let cost = build_match_cost(&a, &vectors, 2).unwrap();
        assert_eq!(min_cost_matching(&cost).unwrap(), vec![0, 1]);
    }

    #[test]
    fn k_one_assigns_everything_to_zero() {
        let vectors = vec![lv(0, &[1.0]), lv(1, &[3.0])];
        let (a, c) = cluster_loss_vectors(&vectors, 1, 7, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(a.members(0), vec![0, 1]);
        assert_eq!(c, vec![vec![2.0]]);
    }

    #[test]
    fn purity_under_relabeling() {
        assert_eq!(assignment_purity(&[1, 1, 0, 0], &[0, 0, 1, 1]), 1.0);
        assert_eq!(assignment_purity(&[0, 0, 0, 1], &[0, 0, 1, 1]), 0.75);
        assert_eq!(assignment_purity(&[0, 0, 0, 0], &[0, 1, 2, 3]), 0.25);
    }

    proptest! {
        #[test]
        fn matching_is_label_equivariant(
            cost in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 4),
            perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            // Renaming models by `perm` permutes the cost columns; the
            // optimal assignment cost is unchanged and the permutation is
            // conjugated (modulo ties, which random reals avoid).
            let renamed: Vec<Vec<f64>> = cost
                .iter()
                .map(|row| {
                    let mut r = vec![0.0; 4];
                    for (j, &x) in row.iter().enumerate() {
                        r[perm[j]] = x;
                    }
                    r
                })
                .collect();
            let sigma = min_cost_matching(&cost).unwrap();
            let renamed_sigma = min_cost_matching(&renamed).unwrap();
            let conjugated: Vec<usize> = sigma.iter().map(|&c| perm[c]).collect();
            prop_assert!((assignment_cost(&cost, &sigma) - assignment_cost(&renamed, &renamed_sigma)).abs() < 1e-9);
            prop_assert_eq!(renamed_sigma, conjugated);
        }

        #[test]
        fn purity_in_unit_interval(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40)) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let purity = assignment_purity(&p, &t);
            prop_assert!((0.0..=1.0).contains(&purity));
            prop_assert!(purity >= 1.0 / 4.0 - 1e-12 || p.len() < 4);
        }
    }
}
