//! Lloyd's k-means with k-means++ seeding and independent restarts.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{param_err, Result};
use crate::linalg::{ensure_finite, Matrix};
use crate::seed;

pub const DEFAULT_RESTARTS: usize = 20;
pub const MAX_LLOYD_ITER: usize = 300;

/// Centroids (`k x d`) and the within-cluster sum of squares they achieve.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub centroids: Matrix,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Cluster index per point, in `0..k`.
    pub labels: Vec<usize>,
    pub centers: CentroidSet,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist_to(points: &Matrix, i: usize, centers: &Matrix, c: usize) -> f64 {
    (0..points.ncols())
        .map(|f| {
            let t = points[(i, f)] - centers[(c, f)];
            t * t
        })
        .sum()
}

fn nearest(points: &Matrix, i: usize, centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist_to(points, i, centers, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first center uniform, the rest drawn with probability
/// proportional to the squared distance to the nearest chosen center.
pub fn kmeanspp_init<R: Rng>(points: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let (n, d) = points.shape();
    let mut centers = Matrix::zeros(k, d);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.set_row(0, &points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist_to(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            // Guard against rounding at the tail landing on a zero-weight point.
            if d2[idx] == 0.0 {
                idx = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            // All remaining points coincide with a center: pick an unused one.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.set_row(c, &points.row(pick));
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist_to(points, i, &centers, c));
        }
    }
    centers
}

fn assign(points: &Matrix, centers: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, l) in labels.iter_mut().enumerate() {
        let (c, d) = nearest(points, i, centers);
        *l = c;
        inertia += d;
    }
    inertia
}

/// Gives every empty cluster the point farthest from its current center,
/// taken from clusters that keep at least one member.
fn repair_empty(points: &Matrix, centers: &Matrix, labels: &mut [usize], k: usize) -> bool {
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let mut repaired = false;
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = sq_dist_to(points, i, centers, l);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            counts[labels[i]] -= 1;
            labels[i] = empty;
            counts[empty] = 1;
            repaired = true;
        }
    }
    repaired
}

fn update_centers(points: &Matrix, labels: &[usize], centers: &mut Matrix) {
    let k = centers.nrows();
    let mut counts = vec![0usize; k];
    let mut sums = Matrix::zeros(k, points.ncols());
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for f in 0..points.ncols() {
            sums[(l, f)] += points[(i, f)];
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let row = sums.row(c) / count as f64;
            centers.set_row(c, &row);
        }
    }
}

/// Within-cluster sum of squares of a labelling about its own cluster means.
pub fn within_ss(points: &Matrix, labels: &[usize], k: usize) -> f64 {
    let mut centers = Matrix::zeros(k, points.ncols());
    update_centers(points, labels, &mut centers);
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist_to(points, i, &centers, l))
        .sum()
}

/// Lloyd iterations from the given centers until the assignment is stable.
pub fn lloyd(points: &Matrix, init: Matrix, max_iter: usize) -> KMeansFit {
    let k = init.nrows();
    let mut centers = init;
    let mut labels = vec![0usize; points.nrows()];
    let mut inertia = assign(points, &centers, &mut labels);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        repair_empty(points, &centers, &mut labels, k);
        update_centers(points, &labels, &mut centers);
        let mut next = labels.clone();
        inertia = assign(points, &centers, &mut next);
        trace.push(inertia);
        if next == labels {
            break;
        }
        labels = next;
    }
    // Final repair so that every cluster is represented in the output.
    if repair_empty(points, &centers, &mut labels, k) {
        update_centers(points, &labels, &mut centers);
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist_to(points, i, &centers, l))
        .sum();
    KMeansFit {
        labels,
        centers: CentroidSet { centroids: centers, inertia },
        iterations,
        inertia_trace: trace,
    }
}

/// Best-of-`restarts` k-means. Restart `r` uses its own stream derived from
/// `seed`, so the result is independent of the thread count.
pub fn kmeans(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.nrows();
    if k == 0 || k > n {
        return param_err(format!("k-means needs 1 <= k <= n, got k = {k}, n = {n}"));
    }
    if restarts == 0 {
        return param_err("k-means needs at least one restart");
    }
    ensure_finite(points, "k-means input")?;
    let fits: Vec<KMeansFit> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed::substream(seed, r as u64));
            let init = kmeanspp_init(points, k, &mut rng);
            lloyd(points, init, MAX_LLOYD_ITER)
        })
        .collect();
    // Lowest inertia wins; ties go to the earliest restart.
    let best = fits
        .into_iter()
        .reduce(|a, b| if b.centers.inertia < a.centers.inertia { b } else { a })
        .expect("restarts >= 1");
    Ok(best)
}
