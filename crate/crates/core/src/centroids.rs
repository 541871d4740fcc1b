//! Fixed class centroids on the unit hypersphere.
//!
//! Two generators are provided: the one-hot vertices of the standard simplex
//! (all pairwise distances `√2`) and K-means over uniformly sampled sphere
//! points. Both approximate a Tammes packing; neither solves it exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::linalg::{dist, norm, unit_normalize, uniform_sphere_point, RealVector, SeededRng};

const UNIT_TOL: f64 = 1e-10;

/// Pairwise-distance statistics over unordered distinct pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidStats {
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    centroids: Vec<RealVector>,
    stats: CentroidStats,
}

impl CentroidSet {
    /// Validates unit norms and distinctness, then computes the statistics.
    pub fn new(centroids: Vec<RealVector>) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::invalid("a centroid set needs at least 2 centroids"));
        }
        let dim = centroids[0].dim();
        for (m, c) in centroids.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.dim(),
                });
            }
            if (norm(c) - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!("centroid {m} is not unit norm")));
            }
        }
        let stats = centroid_stats(&centroids)?;
        if !(stats.kappa_min > 0.0) {
            return Err(Error::invalid("centroids must be pairwise distinct"));
        }
        Ok(Self { centroids, stats })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].dim()
    }

    pub fn get(&self, m: usize) -> &[f64] {
        &self.centroids[m]
    }

    pub fn centroids(&self) -> &[RealVector] {
        &self.centroids
    }

    pub fn stats(&self) -> CentroidStats {
        self.stats
    }

    pub fn kappa_min(&self) -> f64 {
        self.stats.kappa_min
    }

    pub fn kappa_max(&self) -> f64 {
        self.stats.kappa_max
    }

    /// SHA-256 over the exact bit patterns of every coordinate.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim() as u64).to_le_bytes());
        for c in &self.centroids {
            for v in c.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CentroidDoc {
            dim: self.dim(),
            centroids: self.centroids.iter().map(|c| c.to_vec()).collect(),
            stats: self.stats,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses the JSON document; stored statistics are recomputed rather than
    /// trusted.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CentroidDoc = serde_json::from_str(s)?;
        let centroids = doc
            .centroids
            .into_iter()
            .map(RealVector::new)
            .collect::<Result<Vec<_>>>()?;
        if let Some(c) = centroids.iter().find(|c| c.dim() != doc.dim) {
            return Err(Error::DimensionMismatch {
                expected: doc.dim,
                actual: c.dim(),
            });
        }
        Self::new(centroids)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct CentroidDoc {
    dim: usize,
    centroids: Vec<Vec<f64>>,
    stats: CentroidStats,
}

/// Standard basis vectors of `R^C` as the class centroids.
pub fn one_hot_centroids(classes: usize) -> Result<CentroidSet> {
    if classes < 2 {
        return Err(Error::invalid("one-hot centroids need at least 2 classes"));
    }
    CentroidSet::new((0..classes).map(|m| RealVector::basis(classes, m)).collect())
}

/// Default sample count for K-means centroid generation: `1000·C`, capped at 10⁶.
pub fn default_kmeans_points(classes: usize) -> usize {
    (1000 * classes).min(1_000_000)
}

/// Unit-normalized K-means centers of `n_points` uniform samples on the unit
/// sphere in `R^dim`.
pub fn kmeans_sphere_centroids(
    classes: usize,
    dim: usize,
    n_points: usize,
    rng: &mut SeededRng,
) -> Result<CentroidSet> {
    if classes < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if dim < 2 {
        return Err(Error::invalid("sphere dimension must be at least 2"));
    }
    if n_points < 10 * classes {
        return Err(Error::invalid(format!(
            "need at least {} sample points for {classes} classes, got {n_points}",
            10 * classes
        )));
    }
    let mut points = Vec::with_capacity(n_points * dim);
    for _ in 0..n_points {
        points.extend_from_slice(&uniform_sphere_point(dim, rng)?);
    }
    let res = kmeans(&points, dim, &KMeansConfig::new(classes), rng)?;
    let centroids = (0..classes)
        .map(|j| RealVector::new(unit_normalize(res.center(j, dim))?))
        .collect::<Result<Vec<_>>>()?;
    CentroidSet::new(centroids)
}

/// Exhaustive pairwise scan. Pairs are visited in `(m, n)`, `m < n` order.
pub fn centroid_stats(set: &[RealVector]) -> Result<CentroidStats> {
    if set.len() < 2 {
        return Err(Error::invalid("statistics need at least 2 vectors"));
    }
    let mut dists = Vec::with_capacity(set.len() * (set.len() - 1) / 2);
    for m in 0..set.len() {
        for n in m + 1..set.len() {
            dists.push(dist(&set[m], &set[n]));
        }
    }
    let kappa_min = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let kappa_max = dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // shifted by kappa_min so that equal distances give an exact mean and zero spread
    let mean = kappa_min + dists.iter().map(|d| d - kappa_min).sum::<f64>() / dists.len() as f64;
    let var = dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / dists.len() as f64;
    Ok(CentroidStats {
        kappa_min,
        kappa_max,
        // keep kappa_min <= mean <= kappa_max under rounding
        mean: mean.clamp(kappa_min, kappa_max),
        std: var.sqrt(),
    })
}

/// The Tammes objective: the smallest pairwise distance. Scoring only.
pub fn tammes_objective(set: &CentroidSet) -> f64 {
    set.kappa_min()
}
