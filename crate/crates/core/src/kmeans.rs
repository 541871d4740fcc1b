//! Lloyd's K-means with k-means++ seeding, in plain Euclidean space.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, SeededRng};

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative change in inertia falls below this.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// `k × dim`, row-major.
    pub centers: Vec<f64>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn center(&self, j: usize, dim: usize) -> &[f64] {
        &self.centers[j * dim..(j + 1) * dim]
    }
}

/// Clusters `points` (`n × dim`, row-major) into `cfg.k` groups.
pub fn kmeans(points: &[f64], dim: usize, cfg: &KMeansConfig, rng: &mut SeededRng) -> Result<KMeansResult> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "{} values do not form rows of dimension {dim}",
            points.len()
        )));
    }
    let n = points.len() / dim;
    let k = cfg.k;
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot form {k} clusters from {n} points")));
    }

    let mut centers = plus_plus_init(points, dim, k, rng);
    let mut assignment = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let (best, d) = nearest(p, &centers, dim);
            if best != assignment[i] {
                changed = true;
            }
            assignment[i] = best;
            dists[i] = d;
        }
        inertia = dists.iter().sum();

        repair_empty_clusters(points, dim, k, &centers, &mut assignment, &mut dists)?;
        centers = cluster_means(points, dim, k, &assignment);

        let converged = !changed && iterations > 1
            || (prev_inertia.is_finite() && (prev_inertia - inertia).abs() <= cfg.tol * prev_inertia);
        prev_inertia = inertia;
        if converged {
            break;
        }
    }

    Ok(KMeansResult {
        centers,
        assignment,
        inertia,
        iterations,
    })
}

/// Index of, and squared distance to, the closest center. Ties go to the
/// lower index.
fn nearest(p: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

fn plus_plus_init(points: &[f64], dim: usize, k: usize, rng: &mut SeededRng) -> Vec<f64> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(row(first));

    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in min_d.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // every point coincides with a center already
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = sq_dist(row(i), &c);
            if nd < *d {
                *d = nd;
            }
        }
        centers.extend_from_slice(&c);
    }
    centers
}

/// Moves the point farthest from its center in the largest cluster into each
/// empty cluster.
fn repair_empty_clusters(
    points: &[f64],
    dim: usize,
    k: usize,
    centers: &[f64],
    assignment: &mut [usize],
    dists: &mut [f64],
) -> Result<()> {
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let largest = (0..k).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
        if sizes[largest] < 2 {
            return Err(Error::EmptyCluster);
        }
        let far = (0..assignment.len())
            .filter(|&i| assignment[i] == largest)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .unwrap();
        assignment[far] = empty;
        dists[far] = sq_dist(&points[far * dim..(far + 1) * dim], &centers[empty * dim..(empty + 1) * dim]);
        sizes[largest] -= 1;
        sizes[empty] += 1;
    }
    Ok(())
}

fn cluster_means(points: &[f64], dim: usize, k: usize, assignment: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.chunks_exact(dim).zip(assignment) {
        counts[a] += 1;
        for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (j, &cnt) in counts.iter().enumerate() {
        let inv = 1.0 / cnt as f64;
        sums[j * dim..(j + 1) * dim].iter_mut().for_each(|s| *s *= inv);
    }
    sums
}
