//! Lloyd's k-means with k-means++ seeding.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(clusters: usize) -> Self {
        Self {
            clusters,
            restarts: 10,
            max_iters: 300,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// One row per cluster.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

impl ClusterAssignment {
    pub fn clusters(&self) -> usize {
        self.centroids.nrows()
    }

    /// Frame indices of each cluster, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    history: Vec<f64>,
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();

    while centroids.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // all remaining mass is zero: every point coincides with a centroid
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen[next] = true;
        centroids.push(points[next].clone());
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

fn update(
    points: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    dim: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

/// Fill empty clusters by moving the point farthest from its own centroid
/// (taken from a cluster with more than one member) into each.
fn repair_empty(
    points: &[Vec<f64>],
    labels: &mut [usize],
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
) {
    let k = centroids.len();
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if pick.is_none_or(|(_, best)| d > best) {
                pick = Some((i, d));
            }
        }
        let Some((i, _)) = pick else { return };
        counts[labels[i]] -= 1;
        labels[i] = empty;
        counts[empty] = 1;
        centroids[empty] = points[i].clone();
    }
}

fn inertia(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> Run {
    let dim = points[0].len();
    let mut centroids = plus_plus(points, k, rng);
    let (mut labels, _) = assign(points, &centroids);
    let mut history = Vec::new();

    for _ in 0..max_iters.max(1) {
        let (mut updated, mut counts) = update(points, &labels, k, dim);
        if counts.contains(&0) {
            repair_empty(points, &mut labels, &mut updated, &mut counts);
            let (recomputed, _) = update(points, &labels, k, dim);
            updated = recomputed;
        }
        centroids = updated;
        history.push(inertia(points, &labels, &centroids));

        let (next, _) = assign(points, &centroids);
        if next == labels {
            break;
        }
        labels = next;
    }

    // labels may have been reassigned (and a cluster emptied) after the last update
    let (mut updated, mut counts) = update(points, &labels, k, dim);
    if counts.contains(&0) {
        repair_empty(points, &mut labels, &mut updated, &mut counts);
        updated = update(points, &labels, k, dim).0;
    }
    centroids = updated;
    let inertia = inertia(points, &labels, &centroids);
    history.push(inertia);
    Run {
        labels,
        centroids,
        inertia,
        history,
    }
}

fn rows_of(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    points
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect()
}

/// Best of `restarts` k-means runs on the rows of `points`.
///
/// Restart `r` draws from ChaCha stream `r` of the configured seed; the
/// lowest inertia wins, earliest restart on ties.
pub fn kmeans(points: &DMatrix<f64>, config: &KMeansConfig) -> Result<ClusterAssignment> {
    let n = points.nrows();
    let k = config.clusters;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count must satisfy 1 <= c <= n = {n}, got {k}"
        )));
    }
    if config.restarts == 0 {
        return Err(Error::InvalidParameter(
            "restarts must be at least 1".into(),
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "k-means input has non-finite entries".into(),
        ));
    }
    let rows = rows_of(points);

    let mut best: Option<Run> = None;
    for restart in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let run = lloyd(&rows, k, config.max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("restarts >= 1");
    let dim = points.ncols();
    Ok(ClusterAssignment {
        labels: best.labels,
        centroids: DMatrix::from_fn(k, dim, |i, j| best.centroids[i][j]),
        inertia: best.inertia,
    })
}

/// Within-cluster sum of squares of an arbitrary labelling.
pub fn partition_inertia(points: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let rows = rows_of(points);
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let (centroids, _) = update(&rows, labels, k, points.ncols());
    inertia(&rows, labels, &centroids)
}
