//! Lloyd's algorithm with k-means++ seeding, best of several restarts.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{substream, Rng};

pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after each assignment step of the kept restart.
    pub wcss_history: Vec<f64>,
}

impl Clustering {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Row indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &a) in self.assignments.iter().enumerate() {
            out[a].push(i);
        }
        out
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lower index.
fn nearest(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter_rows().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = points.iter_rows().map(|r| sq_dist(r, points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            WeightedIndex::new(&d2)
                .map(|w| w.sample(rng))
                .unwrap_or_else(|_| rng.gen_range(0..n))
        } else {
            // every point already coincides with a centroid
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (d, r) in d2.iter_mut().zip(points.iter_rows()) {
            *d = d.min(sq_dist(r, points.row(pick)));
        }
    }
    centroids
}

fn assign(points: &Matrix, centroids: &Matrix, assignments: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut wcss = 0.0;
    for (i, row) in points.iter_rows().enumerate() {
        let (c, d) = nearest(row, centroids);
        assignments[i] = c;
        dists[i] = d;
        wcss += d;
    }
    wcss
}

fn lloyd(points: &Matrix, k: usize, rng: &mut Rng, max_iter: usize, tol: f64) -> Clustering {
    let n = points.rows();
    let d = points.cols();
    let mut centroids = kmeans_pp(points, k, rng);
    let mut assignments = vec![0; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        history.push(assign(points, &centroids, &mut assignments, &mut dists));

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (row, &a) in points.iter_rows().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] == 0 {
                // move an empty centroid onto the currently worst-served point
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                dists[far] = 0.0;
                shift = shift.max(sq_dist(centroids.row(c), points.row(far)).sqrt());
                centroids.row_mut(c).copy_from_slice(points.row(far));
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let new: Vec<f64> = sums.row(c).iter().map(|s| s * inv).collect();
            shift = shift.max(sq_dist(centroids.row(c), &new).sqrt());
            centroids.row_mut(c).copy_from_slice(&new);
        }
        if shift < tol {
            break;
        }
    }
    let wcss = assign(points, &centroids, &mut assignments, &mut dists);
    history.push(wcss);
    Clustering {
        k,
        centroids,
        assignments,
        wcss,
        iterations,
        wcss_history: history,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

/// K-means on the rows of `points`, keeping the restart with the lowest WCSS
/// (ties go to the earliest restart).
pub fn run_kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Clustering> {
    run_kmeans_with(
        points,
        k,
        seed,
        &KMeansOptions {
            max_iter,
            tol,
            ..KMeansOptions::default()
        },
    )
}

pub fn run_kmeans_with(points: &Matrix, k: usize, seed: u64, opts: &KMeansOptions) -> Result<Clustering> {
    if points.rows() == 0 {
        return Err(Error::Empty("k-means input"));
    }
    if k < 1 || k > points.rows() {
        return Err(Error::config(format!(
            "K must lie in [1, {}], got {k}",
            points.rows()
        )));
    }
    let restarts = opts.restarts.max(1);
    let runs: Vec<Clustering> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, "kmeans/restart", r as u64);
            lloyd(points, k, &mut rng, opts.max_iter.max(1), opts.tol)
        })
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.wcss.total_cmp(&b.wcss).then(ia.cmp(ib)))
        .map(|(_, c)| c)
        .expect("at least one restart");
    Ok(best)
}

/// WCSS curve for k = 1..=k_max.
pub fn wcss_curve(points: &Matrix, k_max: usize, seed: u64, opts: &KMeansOptions) -> Result<Vec<f64>> {
    (1..=k_max)
        .map(|k| run_kmeans_with(points, k, crate::rng::derive_seed(seed, "elbow", k as u64), opts).map(|c| c.wcss))
        .collect()
}

/// Elbow choice: the k in 2..k_max-1 with the largest second difference
/// `wcss(k-1) - 2 wcss(k) + wcss(k+1)`. Ties go to the smaller k.
pub fn select_k_elbow(points: &Matrix, k_max: usize, seed: u64) -> Result<usize> {
    select_k_elbow_with(points, k_max, seed, &KMeansOptions::default())
}

pub fn select_k_elbow_with(points: &Matrix, k_max: usize, seed: u64, opts: &KMeansOptions) -> Result<usize> {
    if k_max < 3 {
        return Err(Error::config("k_max ≥ 3"));
    }
    let curve = wcss_curve(points, k_max, seed, opts)?;
    Ok(elbow_of(&curve))
}

/// `curve[i]` is the WCSS at k = i + 1.
pub fn elbow_of(curve: &[f64]) -> usize {
    let mut best = (2, f64::NEG_INFINITY);
    for k in 2..curve.len() {
        let second = curve[k - 2] - 2.0 * curve[k - 1] + curve[k];
        if second > best.1 {
            best = (k, second);
        }
    }
    best.0
}
