use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Sum of squared distances to the assigned centroid after each update.
    pub objective_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids).0).collect()
}

/// Fills empty clusters by moving in the point farthest from its own centroid,
/// taken only from clusters that keep at least one member.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = points
            .iter()
            .enumerate()
            .filter(|(i, _)| sizes[labels[*i]] > 1)
            .map(|(i, p)| (i, sq_dist(p, &centroids[labels[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = donor else {
            return;
        };
        labels[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn update(points: &[Vec<f64>], labels: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
        if n > 0 {
            *c = s.into_iter().map(|v| v / n as f64).collect();
        }
    }
}

fn objective(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

/// Lloyd's algorithm with k-means++ seeding, Euclidean distance, ties to
/// the lowest centroid index. Stops at an assignment fixpoint or `max_iter`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Config("k-means needs K >= 1".into()));
    }
    if points.is_empty() {
        return Err(Error::Empty("k-means input"));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::shape("kmeans point", dim, p.len()));
    }

    let mut rng = SimRng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut labels = assign(points, &centroids);
    repair_empty(points, &mut labels, &mut centroids);

    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        update(points, &labels, &mut centroids);
        trace.push(objective(points, &labels, &centroids));
        let mut next = assign(points, &centroids);
        repair_empty(points, &mut next, &mut centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    update(points, &labels, &mut centroids);
    Ok(KMeansResult {
        labels,
        centroids,
        iterations,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                pts.push(vec![center[0] + spread * dx, center[1] + spread * dy]);
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn single_cluster_is_mean() {
        let pts = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]];
        let r = kmeans(&pts, 1, 0, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.labels, vec![0, 0, 0]);
        assert_eq!(r.centroids[0], vec![2.0, 3.0]);
    }

    #[test]
    fn separated_blobs_are_pure() {
        let (pts, truth) = blobs(&[[0.0, 0.0], [10.0, 10.0]], 20, 0.1, 4);
        let r = kmeans(&pts, 2, 9, DEFAULT_MAX_ITER).unwrap();
        for c in 0..2 {
            let members: Vec<usize> = (0..pts.len()).filter(|&i| truth[i] == c).map(|i| r.labels[i]).collect();
            assert!(members.iter().all(|&l| l == members[0]));
        }
        assert_ne!(r.labels[0], r.labels[39]);
        assert_eq!(r, kmeans(&pts, 2, 9, DEFAULT_MAX_ITER).unwrap());
    }

    #[test]
    fn fewer_points_than_clusters() {
        let pts = vec![vec![1.0], vec![1.0]];
        let r = kmeans(&pts, 3, 1, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.labels.len(), 2);
        assert!(r.labels.iter().all(|&l| l < 3));
        assert!(kmeans(&pts, 0, 1, 10).is_err());
    }

    #[test]
    fn duplicate_points_fill_all_clusters() {
        let pts = vec![vec![0.0]; 6];
        let r = kmeans(&pts, 3, 1, DEFAULT_MAX_ITER).unwrap();
        let mut used = r.labels.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used, vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn objective_never_increases(seed in any::<u64>(), k in 1usize..5) {
            let (pts, _) = blobs(&[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]], 10, 1.0, seed);
            let r = kmeans(&pts, k, seed, DEFAULT_MAX_ITER).unwrap();
            for w in r.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }
}
