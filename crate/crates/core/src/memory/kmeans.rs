//! Lloyd's k-means with k-means++ seeding. All ties go to the lowest index.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MAX_ITERATIONS: usize = 100;
pub const REL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Index of the member nearest each centroid.
    pub medoids: Vec<usize>,
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
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

fn seed_centroids(points: &[&[f64]], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 {
                    if u < *d {
                        pick = Some(i);
                        break;
                    }
                    u -= d;
                }
            }
            // rounding can walk past the end; fall back to the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|d| *d > 0.0).unwrap_or(0))
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].to_vec()).collect()
}

/// Cluster `points` into `k` groups.
pub fn kmeans(points: &[&[f64]], k: usize, rng: &mut Rng) -> Result<KMeans> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k-means needs 1 <= k <= {n}, got {k}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::dim("k-means", dim, "ragged points"));
    }
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignment = vec![0; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut new_inertia = 0.0;
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            assignment[i] = j;
            dists[i] = d;
            new_inertia += d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // re-seed an empty cluster at the worst-fitting point
                let far = (0..n)
                    .filter(|&i| counts[assignment[i]] > 1)
                    .fold(None, |b: Option<usize>, i| match b {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    });
                if let Some(i) = far {
                    counts[assignment[i]] -= 1;
                    for (s, v) in sums[assignment[i]].iter_mut().zip(points[i].iter()) {
                        *s -= v;
                    }
                    assignment[i] = j;
                    dists[i] = 0.0;
                    counts[j] = 1;
                    sums[j] = points[i].to_vec();
                }
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let done =
            inertia.is_finite() && (inertia - new_inertia).abs() <= REL_TOLERANCE * inertia.max(f64::MIN_POSITIVE);
        inertia = new_inertia;
        if done || inertia == 0.0 {
            break;
        }
    }
    // final assignment against the final centroids
    inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(p, &centroids);
        assignment[i] = j;
        inertia += d;
    }
    let medoids = medoids(points, &centroids, &assignment)?;
    Ok(KMeans {
        centroids,
        assignment,
        inertia,
        iterations,
        medoids,
    })
}

/// Nearest distinct member for every centroid. Members of the cluster are
/// preferred; a centroid left without members takes the nearest unused point.
fn medoids(points: &[&[f64]], centroids: &[Vec<f64>], assignment: &[usize]) -> Result<Vec<usize>> {
    let mut used = vec![false; points.len()];
    let mut out = Vec::with_capacity(centroids.len());
    for (j, c) in centroids.iter().enumerate() {
        let pick = |own: bool, used: &[bool]| {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                if used[i] || (own && assignment[i] != j) {
                    continue;
                }
                let d = sq_dist(p, c);
                if best.is_none_or(|b| d < b.1) {
                    best = Some((i, d));
                }
            }
            best.map(|b| b.0)
        };
        let i = pick(true, &used)
            .or_else(|| pick(false, &used))
            .ok_or_else(|| Error::Numeric("k-means ran out of distinct members".into()))?;
        used[i] = true;
        out.push(i);
    }
    Ok(out)
}
