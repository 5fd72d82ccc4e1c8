//! Lloyd's k-means with k-means++ seeding over rows of a `[n x P]` tensor.
//!
//! All arithmetic is done in `f64`; centroids are stored back as `f32`, and the
//! reported distortion is recomputed against the stored centroids so that it
//! matches any independent recomputation from `assignment` and `centroids`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, dim_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the relative distortion improvement drops below this.
    pub tol: f64,
    /// Independent seedings; the lowest-distortion run is kept.
    pub restarts: usize,
    /// When `k^n` is at most this, Lloyd is also started from the means of
    /// every partition into `k` groups. The optimum is a Lloyd fixed point,
    /// so tiny inputs are then solved exactly.
    pub exhaustive_limit: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iters: 300, tol: 1e-6, restarts: 1, exhaustive_limit: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterOutcome {
    /// `[k x P]`.
    pub centroids: Tensor,
    /// Cluster index of every point.
    pub assignment: Vec<usize>,
    /// `eta_i`, the number of points per cluster; all at least one.
    pub cluster_sizes: Vec<usize>,
    /// Sum of squared L2 distances of points to their centroids.
    pub distortion: f64,
    /// Distortion after each Lloyd iteration of the kept run.
    pub history: Vec<f64>,
}

impl ClusterOutcome {
    pub fn k(&self) -> usize {
        self.cluster_sizes.len()
    }

    /// Point indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k()];
        for (point, &c) in self.assignment.iter().enumerate() {
            members[c].push(point);
        }
        members
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_dist_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

struct Run {
    centroids: Vec<f64>,
    assignment: Vec<usize>,
    history: Vec<f64>,
}

/// Clusters the rows of `points` into `cfg.k` groups.
pub fn kmeans(points: &Tensor, cfg: &KMeansConfig) -> Result<ClusterOutcome> {
    if points.rank() != 2 {
        return dim_err(format!("kmeans expects [n x P] points, got {:?}", points.shape()));
    }
    let (n, dim) = (points.shape()[0], points.shape()[1]);
    if cfg.k < 1 || cfg.k > n {
        return arg_err(format!("k = {} must satisfy 1 <= k <= n = {n}", cfg.k));
    }
    let data: Vec<f64> = points.data().iter().map(|&v| v as f64).collect();
    let mut best: Option<(f64, Run)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let seed = cfg.seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = seed_plus_plus(&data, n, dim, cfg.k, &mut rng);
        keep_best(&mut best, lloyd(&data, n, dim, cfg, init));
    }
    if power_at_most(cfg.k, n, cfg.exhaustive_limit) {
        for_each_partition(n, cfg.k, &mut |labels| {
            let mut init = vec![0.0; cfg.k * dim];
            let mut counts = vec![0usize; cfg.k];
            for (i, &c) in labels.iter().enumerate() {
                counts[c] += 1;
                init[c * dim..(c + 1) * dim].iter_mut().zip(&data[i * dim..(i + 1) * dim]).for_each(|(s, v)| *s += v);
            }
            for (c, &count) in counts.iter().enumerate() {
                init[c * dim..(c + 1) * dim].iter_mut().for_each(|s| *s /= count as f64);
            }
            keep_best(&mut best, lloyd(&data, n, dim, cfg, init));
        });
    }
    let (_, run) = best.expect("at least one restart");

    let centroids = Tensor::new(&[cfg.k, dim], run.centroids.iter().map(|&v| v as f32).collect())?;
    let mut cluster_sizes = vec![0; cfg.k];
    run.assignment.iter().for_each(|&c| cluster_sizes[c] += 1);
    if cluster_sizes.contains(&0) {
        return Err(Error::InvalidArgument("empty cluster survived repair".into()));
    }
    let distortion = (0..n)
        .map(|i| {
            let c = run.assignment[i];
            sq_dist_f32(&points.data()[i * dim..(i + 1) * dim], &centroids.data()[c * dim..(c + 1) * dim])
        })
        .sum();
    Ok(ClusterOutcome { centroids, assignment: run.assignment, cluster_sizes, distortion, history: run.history })
}

fn keep_best(best: &mut Option<(f64, Run)>, run: Run) {
    let d = *run.history.last().expect("at least one iteration");
    if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
        *best = Some((d, run));
    }
}

fn power_at_most(base: usize, exp: usize, limit: usize) -> bool {
    let mut v: u128 = 1;
    for _ in 0..exp {
        v *= base as u128;
        if v > limit as u128 {
            return false;
        }
    }
    true
}

/// Calls `f` once per partition of `0..n` into exactly `k` non-empty groups,
/// labelled in order of first appearance.
fn for_each_partition(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn go(labels: &mut Vec<usize>, used: usize, n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
        if labels.len() == n {
            if used == k {
                f(labels);
            }
            return;
        }
        if k - used > n - labels.len() {
            return;
        }
        for c in 0..(used + 1).min(k) {
            labels.push(c);
            go(labels, used.max(c + 1), n, k, f);
            labels.pop();
        }
    }
    go(&mut Vec::with_capacity(n), 0, n, k, f);
}

fn seed_plus_plus(data: &[f64], n: usize, dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Every remaining point coincides with a chosen centre.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(point(i), point(next)));
        }
    }
    chosen.iter().flat_map(|&i| point(i).to_vec()).collect()
}

fn lloyd(data: &[f64], n: usize, dim: usize, cfg: &KMeansConfig, mut centroids: Vec<f64>) -> Run {
    let k = cfg.k;
    let mut assignment = vec![usize::MAX; n];
    let mut history: Vec<f64> = Vec::new();
    let point = |i: usize| &data[i * dim..(i + 1) * dim];

    for _ in 0..cfg.max_iters.max(1) {
        // Assignment, ties to the lowest centroid index.
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(point(i), &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            changed |= assignment[i] != best;
            assignment[i] = best;
            dists[i] = best_d;
        }

        // Empty-cluster repair: move the point farthest from its centroid,
        // taken from a cluster that can spare it.
        let mut sizes = vec![0usize; k];
        assignment.iter().for_each(|&c| sizes[c] += 1);
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let donor = (0..n)
                .filter(|&i| sizes[assignment[i]] > 1)
                .fold(None, |acc: Option<usize>, i| match acc {
                    Some(j) if dists[j] >= dists[i] => Some(j),
                    _ => Some(i),
                })
                .expect("k <= n guarantees a cluster with two members");
            sizes[assignment[donor]] -= 1;
            sizes[empty] = 1;
            assignment[donor] = empty;
            dists[donor] = 0.0;
            centroids[empty * dim..(empty + 1) * dim].copy_from_slice(point(donor));
            changed = true;
        }

        // Update.
        let mut sums = vec![0.0; k * dim];
        for i in 0..n {
            let c = assignment[i];
            sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            let inv = 1.0 / sizes[c] as f64;
            for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                *dst = s * inv;
            }
        }
        let distortion: f64 =
            (0..n).map(|i| sq_dist(point(i), &centroids[assignment[i] * dim..(assignment[i] + 1) * dim])).sum();
        let previous = history.last().copied();
        history.push(distortion);
        if !changed {
            break;
        }
        if let Some(prev) = previous {
            if prev <= 0.0 || (prev - distortion) / prev < cfg.tol {
                break;
            }
        }
    }
    Run { centroids, assignment, history }
}

/// For every cluster, the index of the member closest to its centroid
/// (ties to the lowest point index).
pub fn nearest_member(points: &Tensor, outcome: &ClusterOutcome) -> Result<Vec<usize>> {
    if points.rank() != 2 || points.shape()[0] != outcome.assignment.len() {
        return dim_err(format!(
            "points {:?} do not match an outcome over {} points",
            points.shape(),
            outcome.assignment.len()
        ));
    }
    let dim = points.shape()[1];
    if outcome.centroids.shape() != [outcome.k(), dim] {
        return dim_err("centroid dimension differs from points");
    }
    let mut best: Vec<Option<(usize, f64)>> = vec![None; outcome.k()];
    for (i, &c) in outcome.assignment.iter().enumerate() {
        let d = sq_dist_f32(
            &points.data()[i * dim..(i + 1) * dim],
            &outcome.centroids.data()[c * dim..(c + 1) * dim],
        );
        if best[c].is_none_or(|(_, bd)| d < bd) {
            best[c] = Some((i, d));
        }
    }
    best.into_iter()
        .enumerate()
        .map(|(c, b)| b.map(|(i, _)| i).ok_or_else(|| Error::InvalidArgument(format!("cluster {c} is empty"))))
        .collect()
}
