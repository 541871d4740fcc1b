//! Triplet loss, its centroid upper bound, and the closed-form discriminative
//! loss.
//!
//! For a balanced problem with `N` samples over `C` classes (`n = N/C` per
//! class) the sum of the per-triplet upper bounds over every valid triplet
//! collapses to
//!
//! ```text
//! L_d = G · Σ_i ( ||x_i − c_{y_i}|| − 1/(3(C−1)) · Σ_{m≠y_i} ||x_i − c_m|| ),
//! G   = 3(C−1)(n−1)n
//! ```
//!
//! which costs `N·C` distance evaluations instead of `H = (n−1)·N·(N−n)`
//! triplets. The brute-force enumerations here are kept deliberately naive:
//! they are the oracle for the closed form and the timing baseline.
//!
//! Class labels are zero-based indices `0..C`.

use serde::{Deserialize, Serialize};

use crate::centroids::CentroidSet;
use crate::error::{Error, Result};
use crate::linalg::{check_dims, dist, norm};

/// Distances below this contribute a zero (sub)gradient.
pub const DIST_FLOOR: f64 = 1e-8;

const UNIT_TOL: f64 = 1e-8;
const SANDWICH_SLACK: f64 = 1e-9;
const TRIPLET_SLACK: f64 = 1e-12;

/// Unit-norm embeddings with class labels.
#[derive(Debug, Clone)]
pub struct LabeledEmbeddings {
    embeddings: Vec<Vec<f64>>,
    labels: Vec<usize>,
    per_class: Vec<usize>,
}

impl LabeledEmbeddings {
    pub fn new(embeddings: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if embeddings.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} embeddings but {} labels",
                embeddings.len(),
                labels.len()
            )));
        }
        if embeddings.is_empty() {
            return Err(Error::invalid("no embeddings"));
        }
        let dim = embeddings[0].len();
        let mut per_class = vec![0usize; num_classes];
        for (i, (x, &y)) in embeddings.iter().zip(&labels).enumerate() {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: x.len(),
                });
            }
            if (norm(x) - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!("embedding {i} is not unit norm")));
            }
            if y >= num_classes {
                return Err(Error::invalid(format!(
                    "label {y} of sample {i} outside 0..{num_classes}"
                )));
            }
            per_class[y] += 1;
        }
        Ok(Self {
            embeddings,
            labels,
            per_class,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn per_class_count(&self) -> &[usize] {
        &self.per_class
    }

    /// True iff every class holds exactly `N/C` samples.
    pub fn is_balanced(&self) -> bool {
        let c = self.num_classes();
        c > 0 && self.len() % c == 0 && self.per_class.iter().all(|&k| k == self.len() / c)
    }

    /// Members of each class, in index order.
    fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            members[y].push(i);
        }
        members
    }

    fn check_centroids(&self, cents: &CentroidSet) -> Result<()> {
        if cents.len() != self.num_classes() {
            return Err(Error::Shape(format!(
                "{} centroids for {} classes",
                cents.len(),
                self.num_classes()
            )));
        }
        if cents.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: cents.dim(),
            });
        }
        Ok(())
    }
}

/// `||x_i − x_j|| − ||x_i − x_k||`, margin- and hinge-free.
pub fn triplet_term(xi: &[f64], xj: &[f64], xk: &[f64]) -> Result<f64> {
    check_dims(xi, xj)?;
    check_dims(xi, xk)?;
    Ok(dist(xi, xj) - dist(xi, xk))
}

/// Triangle-inequality upper bound on [`triplet_term`]:
/// `||x_i − c_i|| − ||x_i − c_k|| + ||x_j − c_i|| + ||x_k − c_k||`.
pub fn upper_term(xi: &[f64], xj: &[f64], xk: &[f64], ci: &[f64], ck: &[f64]) -> Result<f64> {
    for v in [xj, xk, ci, ck] {
        check_dims(xi, v)?;
    }
    if ci == ck {
        return Err(Error::invalid("anchor and negative centroids coincide"));
    }
    Ok(upper_term_unchecked(xi, xj, xk, ci, ck))
}

#[inline]
fn upper_term_unchecked(xi: &[f64], xj: &[f64], xk: &[f64], ci: &[f64], ck: &[f64]) -> f64 {
    dist(xi, ci) - dist(xi, ck) + dist(xj, ci) + dist(xk, ck)
}

/// Sum over an enumerated triplet set with its size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletSum {
    pub total: f64,
    pub triplets: u64,
}

/// Number of valid ordered triplets in a balanced problem:
/// `(N/C − 1)·N·(N − N/C)`.
pub fn triplet_count(n: usize, classes: usize) -> u64 {
    let per = (n / classes) as u64;
    let n = n as u64;
    per.saturating_sub(1) * n * (n - per)
}

/// Visits every ordered triplet `(i, j, k)` with `y_j = y_i`, `j ≠ i`,
/// `y_k ≠ y_i`. The closure returns the term for that triplet; terms are summed
/// per anchor and the anchor partials are combined in index order.
fn for_each_triplet(data: &LabeledEmbeddings, mut term: impl FnMut(usize, usize, usize) -> f64) -> Result<TripletSum> {
    let members = data.class_members();
    let mut total = 0.0;
    let mut triplets = 0u64;
    for i in 0..data.len() {
        let yi = data.labels[i];
        let mut partial = 0.0;
        for &j in &members[yi] {
            if j == i {
                continue;
            }
            for (yk, ks) in members.iter().enumerate() {
                if yk == yi {
                    continue;
                }
                for &k in ks {
                    partial += term(i, j, k);
                    triplets += 1;
                }
            }
        }
        total += partial;
    }
    if triplets == 0 {
        return Err(Error::NoTriplets);
    }
    Ok(TripletSum { total, triplets })
}

/// Exact enumeration of the triplet loss over all valid triplets.
pub fn triplet_loss_enumerated(data: &LabeledEmbeddings) -> Result<TripletSum> {
    let x = &data.embeddings;
    for_each_triplet(data, |i, j, k| dist(&x[i], &x[j]) - dist(&x[i], &x[k]))
}

pub fn triplet_loss_bruteforce(data: &LabeledEmbeddings) -> Result<f64> {
    triplet_loss_enumerated(data).map(|s| s.total)
}

/// Exact enumeration of the per-triplet upper bounds.
pub fn upperbound_loss_enumerated(data: &LabeledEmbeddings, cents: &CentroidSet) -> Result<TripletSum> {
    data.check_centroids(cents)?;
    let x = &data.embeddings;
    let y = &data.labels;
    for_each_triplet(data, |i, j, k| {
        upper_term_unchecked(&x[i], &x[j], &x[k], cents.get(y[i]), cents.get(y[k]))
    })
}

pub fn upperbound_loss_bruteforce(data: &LabeledEmbeddings, cents: &CentroidSet) -> Result<f64> {
    upperbound_loss_enumerated(data, cents).map(|s| s.total)
}

/// Triplet loss with its gradient with respect to each embedding; used by the
/// brute-force training baseline. Pairs closer than [`DIST_FLOOR`] contribute
/// no gradient.
pub fn triplet_loss_with_grad(data: &LabeledEmbeddings) -> Result<(TripletSum, Vec<Vec<f64>>)> {
    let x = &data.embeddings;
    let d = data.dim();
    let mut grads = vec![vec![0.0; d]; data.len()];
    let mut diff = vec![0.0; d];
    let sum = for_each_triplet(data, |i, j, k| {
        let dij = dist(&x[i], &x[j]);
        let dik = dist(&x[i], &x[k]);
        if dij >= DIST_FLOOR {
            for t in 0..d {
                diff[t] = (x[i][t] - x[j][t]) / dij;
            }
            for t in 0..d {
                grads[i][t] += diff[t];
                grads[j][t] -= diff[t];
            }
        }
        if dik >= DIST_FLOOR {
            for t in 0..d {
                diff[t] = (x[i][t] - x[k][t]) / dik;
            }
            for t in 0..d {
                grads[i][t] -= diff[t];
                grads[k][t] += diff[t];
            }
        }
        dij - dik
    })?;
    Ok((sum, grads))
}

/// Value of the closed-form discriminative loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminativeLoss {
    pub value: f64,
    pub g_const: f64,
    /// Embedding-to-centroid distances evaluated; always `N·C`.
    pub distance_evals: u64,
}

/// `G = 3(C−1)(n−1)n`, checking the balance preconditions.
fn balanced_g(data: &LabeledEmbeddings) -> Result<f64> {
    let c = data.num_classes();
    if c < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if !data.is_balanced() {
        return Err(Error::Unbalanced(format!(
            "class sizes {:?} are not all equal",
            data.per_class_count()
        )));
    }
    let per = data.len() / c;
    if per < 2 {
        return Err(Error::invalid(format!(
            "{per} sample(s) per class leaves no positive pairs"
        )));
    }
    let (c, per) = (c as f64, per as f64);
    Ok(3.0 * (c - 1.0) * (per - 1.0) * per)
}

/// Closed-form discriminative loss; `Θ(N·C)`.
pub fn discriminative_loss(data: &LabeledEmbeddings, cents: &CentroidSet) -> Result<DiscriminativeLoss> {
    data.check_centroids(cents)?;
    let g = balanced_g(data)?;
    let c = data.num_classes();
    let push_w = 1.0 / (3.0 * (c as f64 - 1.0));
    let mut total = 0.0;
    let mut evals = 0u64;
    for (x, &y) in data.embeddings.iter().zip(&data.labels) {
        let mut pull = 0.0;
        let mut push = 0.0;
        for m in 0..c {
            let d = dist(x, cents.get(m));
            evals += 1;
            if m == y {
                pull = d;
            } else {
                push += d;
            }
        }
        total += pull - push_w * push;
    }
    Ok(DiscriminativeLoss {
        value: g * total,
        g_const: g,
        distance_evals: evals,
    })
}

/// Analytic gradient of [`discriminative_loss`] with respect to each embedding
/// (before any normalization-layer Jacobian).
pub fn discriminative_loss_grad(data: &LabeledEmbeddings, cents: &CentroidSet) -> Result<Vec<Vec<f64>>> {
    data.check_centroids(cents)?;
    let g = balanced_g(data)?;
    let c = data.num_classes();
    let push_w = 1.0 / (3.0 * (c as f64 - 1.0));
    let grads = data
        .embeddings
        .iter()
        .zip(&data.labels)
        .map(|(x, &y)| {
            let mut grad = vec![0.0; x.len()];
            for m in 0..c {
                let cm = cents.get(m);
                let d = dist(x, cm);
                if d < DIST_FLOOR {
                    continue;
                }
                let w = if m == y { g / d } else { -g * push_w / d };
                for ((gt, xt), ct) in grad.iter_mut().zip(x).zip(cm) {
                    *gt += w * (xt - ct);
                }
            }
            grad
        })
        .collect();
    Ok(grads)
}

/// Both losses, their gap, and the bound on the gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_t: f64,
    pub l_d: f64,
    /// `L_d − L_t`, accumulated per triplet as `Σ (ℓ_d − ℓ_t)` so that it
    /// does not suffer cancellation between two large totals.
    pub gap: f64,
    /// `H·(κ_max − κ_min + 3ε)`
    pub lemma_bound: f64,
    /// `2·max_i ||x_i − c_{y_i}||`
    pub epsilon: f64,
    pub g_const: f64,
    /// Number of valid triplets.
    pub h_const: f64,
}

/// Computes both losses on balanced data and checks
/// `0 ≤ L_d − L_t ≤ H·(κ_max − κ_min + 3ε)`, with ε measured from the data.
///
/// A violated sandwich is reported as [`Error::BoundViolation`]; on valid input
/// it indicates a bug.
pub fn lemma_gap_report(data: &LabeledEmbeddings, cents: &CentroidSet) -> Result<LossReport> {
    let ld = discriminative_loss(data, cents)?;
    let x = &data.embeddings;
    let y = &data.labels;

    let l_t = triplet_loss_enumerated(data)?;
    let gap = for_each_triplet(data, |i, j, k| {
        let lt = dist(&x[i], &x[j]) - dist(&x[i], &x[k]);
        upper_term_unchecked(&x[i], &x[j], &x[k], cents.get(y[i]), cents.get(y[k])) - lt
    })?;

    let epsilon = 2.0
        * x.iter()
            .zip(y)
            .map(|(xi, &yi)| dist(xi, cents.get(yi)))
            .fold(0.0, f64::max);
    let h = triplet_count(data.len(), data.num_classes());
    if h != l_t.triplets {
        return Err(Error::BoundViolation(format!(
            "enumerated {} triplets, expected H = {h}",
            l_t.triplets
        )));
    }
    let h = h as f64;
    let lemma_bound = h * (cents.kappa_max() - cents.kappa_min() + 3.0 * epsilon);

    let report = LossReport {
        l_t: l_t.total,
        l_d: ld.value,
        gap: gap.total,
        lemma_bound,
        epsilon,
        g_const: ld.g_const,
        h_const: h,
    };

    let direct = report.l_d - report.l_t;
    let scale = report.l_d.abs().max(report.l_t.abs()).max(1.0);
    if (direct - report.gap).abs() > 1e-9 * scale {
        return Err(Error::BoundViolation(format!(
            "closed form disagrees with enumeration: L_d − L_t = {direct}, Σ(ℓ_d − ℓ_t) = {}",
            report.gap
        )));
    }
    if report.gap < -SANDWICH_SLACK || report.gap > report.lemma_bound + SANDWICH_SLACK {
        return Err(Error::BoundViolation(format!(
            "gap {} outside [0, {}]",
            report.gap, report.lemma_bound
        )));
    }
    Ok(report)
}

/// Checks the two per-triplet inequalities behind the gap bound:
/// `ℓ_d ≤ −κ_min + 2ε` and `−ℓ_t ≤ κ_max + ε`.
///
/// Requires `||x_i − c_i||`, `||x_j − c_i||` and `||x_k − c_k||` all at most `ε/2`.
#[allow(clippy::too_many_arguments)]
pub fn per_triplet_bounds_check(
    xi: &[f64],
    xj: &[f64],
    xk: &[f64],
    ci: &[f64],
    ck: &[f64],
    kappa_min: f64,
    kappa_max: f64,
    epsilon: f64,
) -> Result<(bool, bool)> {
    let ld = upper_term(xi, xj, xk, ci, ck)?;
    let lt = triplet_term(xi, xj, xk)?;
    let radius = epsilon / 2.0;
    for (name, d) in [("x_i", dist(xi, ci)), ("x_j", dist(xj, ci)), ("x_k", dist(xk, ck))] {
        if d > radius + TRIPLET_SLACK {
            return Err(Error::invalid(format!(
                "{name} is {d} from its centroid, beyond epsilon/2 = {radius}"
            )));
        }
    }
    Ok((
        ld <= -kappa_min + 2.0 * epsilon + TRIPLET_SLACK,
        -lt <= kappa_max + epsilon + TRIPLET_SLACK,
    ))
}
