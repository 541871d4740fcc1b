//! Retrieval (Recall@K) and clustering (NMI) quality of an embedding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::linalg::{sq_dist, SeededRng};
use crate::model::EmbedNet;

pub const DEFAULT_KS: [usize; 4] = [1, 2, 4, 8];
const NMI_RESTARTS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub nmi: f64,
    pub n_queries: usize,
}

impl RetrievalReport {
    /// One row in `NMI R@1 R@2 ...` order, as percentages.
    pub fn table(&self) -> String {
        let mut head = String::from("NMI");
        let mut row = format!("{:.2}", 100.0 * self.nmi);
        for (k, r) in &self.recall_at {
            head.push_str(&format!("\tR@{k}"));
            row.push_str(&format!("\t{:.2}", 100.0 * r));
        }
        format!("{head}\n{row}\n")
    }
}

/// Fraction of queries with a same-label sample among their `K` nearest
/// neighbours (self excluded, ties broken by lower index).
pub fn recall_at_k(embeddings: &[Vec<f64>], labels: &[usize], ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let n = embeddings.len();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} embeddings but {} labels", labels.len())));
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    if ks.contains(&0) {
        return Err(Error::invalid("K must be positive"));
    }
    if kmax >= n {
        return Err(Error::invalid(format!("K = {kmax} needs more than {n} samples")));
    }
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for q in 0..n {
        order.clear();
        order.extend(
            (0..n)
                .filter(|&j| j != q)
                .map(|j| (sq_dist(&embeddings[q], &embeddings[j]), j)),
        );
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        order.select_nth_unstable_by(kmax - 1, cmp);
        order[..kmax].sort_unstable_by(cmp);
        // rank of the first correct neighbour
        let first = order[..kmax].iter().position(|&(_, j)| labels[j] == labels[q]);
        if let Some(rank) = first {
            for (&k, h) in hits.iter_mut() {
                if rank < k {
                    *h += 1;
                }
            }
        }
    }
    Ok(hits.into_iter().map(|(k, h)| (k, h as f64 / n as f64)).collect())
}

/// Normalized mutual information with arithmetic-mean normalization,
/// `I(A;B) / ((H(A) + H(B)) / 2)`. Returns 1 when both partitions are a single
/// block, and 0 when exactly one of them is.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape("partitions must be non-empty and equally long".into()));
    }
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut joint = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(&ca), entropy(&cb));
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            mi += pxy * (c as f64 * n / (ca[x] as f64 * cb[y] as f64)).ln();
        }
    }
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

/// K-means (k-means++ seeding, best inertia of 10 restarts) into `n_clusters`
/// groups, scored against `labels` with [`nmi`].
pub fn nmi_score(embeddings: &[Vec<f64>], labels: &[usize], n_clusters: usize, seed: u64) -> Result<f64> {
    if n_clusters < 2 {
        return Err(Error::invalid("need at least 2 clusters"));
    }
    if embeddings.len() < n_clusters || labels.len() != embeddings.len() {
        return Err(Error::invalid(format!(
            "{} samples cannot form {n_clusters} clusters",
            embeddings.len()
        )));
    }
    let dim = embeddings[0].len();
    let flat: Vec<f64> = embeddings.iter().flatten().copied().collect();
    let base = SeededRng::new(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..NMI_RESTARTS {
        let res = kmeans(&flat, dim, &KMeansConfig::new(n_clusters), &mut base.derive(r))?;
        if best.as_ref().is_none_or(|(inertia, _)| res.inertia < *inertia) {
            best = Some((res.inertia, res.assignment));
        }
    }
    nmi(&best.unwrap().1, labels)
}

/// Embeds every sample with the retrieval (hidden-layer) embedding and scores
/// Recall@{1,2,4,8} and NMI over the dataset's classes.
pub fn evaluate(net: &EmbedNet, data: &LabeledDataset, seed: u64) -> Result<RetrievalReport> {
    if data.feature_dim() != net.spec().input_dim {
        return Err(Error::DimensionMismatch {
            expected: net.spec().input_dim,
            actual: data.feature_dim(),
        });
    }
    let embeddings = data
        .features()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            net.retrieval_embedding(f).map_err(|e| Error::Sample {
                sample: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_embeddings(&embeddings, data.labels(), data.num_classes(), seed)
}

pub fn evaluate_embeddings(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<RetrievalReport> {
    let ks: Vec<usize> = DEFAULT_KS.iter().copied().filter(|&k| k < embeddings.len()).collect();
    Ok(RetrievalReport {
        recall_at: recall_at_k(embeddings, labels, &ks)?,
        nmi: nmi_score(embeddings, labels, n_classes, seed)?,
        n_queries: embeddings.len(),
    })
}
