#![allow(dead_code)]

use dml_core::centroids::{one_hot_centroids, CentroidSet};
use dml_core::linalg::{standard_normal_vector, uniform_sphere_point, unit_normalize, RealVector, SeededRng};
use dml_core::losses::{discriminative_loss, discriminative_loss_grad, LabeledEmbeddings};
use dml_core::model::{EmbedNet, NetSpec};
use rand::Rng;

pub fn unit(dim: usize, rng: &mut SeededRng) -> Vec<f64> {
    uniform_sphere_point(dim, rng).unwrap().into_inner()
}

/// `i % classes`, so every class gets exactly `n / classes` samples.
pub fn balanced_labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % classes).collect()
}

pub fn random_embeddings(n: usize, classes: usize, dim: usize, rng: &mut SeededRng) -> LabeledEmbeddings {
    let x = (0..n).map(|_| unit(dim, rng)).collect();
    LabeledEmbeddings::new(x, balanced_labels(n, classes), classes).unwrap()
}

/// Each embedding is its class centroid pushed by Gaussian noise of scale
/// `noise`, then renormalized.
pub fn embeddings_near(cents: &CentroidSet, n: usize, noise: f64, rng: &mut SeededRng) -> LabeledEmbeddings {
    let labels = balanced_labels(n, cents.len());
    let x = labels
        .iter()
        .map(|&y| {
            let z = standard_normal_vector(cents.dim(), rng).unwrap();
            let p: Vec<f64> = cents.get(y).iter().zip(z.iter()).map(|(c, e)| c + noise * e).collect();
            unit_normalize(&p).unwrap()
        })
        .collect();
    LabeledEmbeddings::new(x, labels, cents.len()).unwrap()
}

pub fn random_centroids(classes: usize, dim: usize, rng: &mut SeededRng) -> CentroidSet {
    let v = (0..classes)
        .map(|_| RealVector::new(unit(dim, rng)).unwrap())
        .collect();
    CentroidSet::new(v).unwrap()
}

/// One-hot on even seeds, random sphere points otherwise.
pub fn some_centroids(classes: usize, seed: u64, rng: &mut SeededRng) -> CentroidSet {
    if seed % 2 == 0 {
        one_hot_centroids(classes).unwrap()
    } else {
        random_centroids(classes, classes, rng)
    }
}

/// Haar-random orthogonal matrix (rows), by Gram-Schmidt on Gaussian rows.
pub fn random_rotation(dim: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while q.len() < dim {
        let mut v = standard_normal_vector(dim, rng).unwrap().into_inner();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    q
}

pub fn apply(rot: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    rot.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn hidden_preactivations(net: &EmbedNet, x: &[f64]) -> Vec<f64> {
    let [w1, b1, _, _] = net.params();
    w1.chunks_exact(x.len())
        .zip(b1)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

fn batch_loss(net: &EmbedNet, inputs: &[Vec<f64>], labels: &[usize], cents: &CentroidSet) -> f64 {
    let emb = inputs.iter().map(|x| net.forward(x).unwrap().embedding).collect();
    let data = LabeledEmbeddings::new(emb, labels.to_vec(), cents.len()).unwrap();
    discriminative_loss(&data, cents).unwrap().value
}

/// Worst relative disagreement between backpropagated parameter gradients of
/// the discriminative loss and central differences with step `H`, over every
/// parameter. Entries where both are below `FLOOR` in magnitude are compared
/// against `FLOOR`.
pub fn network_gradient_error(seed: u64, classes: usize, batch: usize, input_dim: usize, hidden: usize) -> f64 {
    const H: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let mut rng = SeededRng::new(seed);
    let spec = NetSpec {
        input_dim,
        hidden_dim: hidden,
        output_dim: classes,
    };
    let mut net = EmbedNet::init(spec, &mut rng).unwrap();
    // nonzero biases so their gradients are exercised away from the init point
    for g in [1, 3] {
        for b in net.params_mut()[g].iter_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let cents = random_centroids(classes, classes, &mut rng);
    // Central differences are only meaningful where the loss is smooth, so
    // inputs whose hidden pre-activations come within reach of the step are
    // redrawn.
    let inputs: Vec<Vec<f64>> = (0..batch)
        .map(|_| loop {
            let x = standard_normal_vector(input_dim, &mut rng).unwrap().into_inner();
            let reach = 10.0 * H * (1.0 + x.iter().map(|v| v.abs()).sum::<f64>());
            if hidden_preactivations(&net, &x).iter().all(|a| a.abs() > reach) {
                break x;
            }
        })
        .collect();
    let labels = balanced_labels(batch, classes);

    net.zero_grad();
    let fwd: Vec<_> = inputs.iter().map(|x| net.forward(x).unwrap()).collect();
    let emb = fwd.iter().map(|f| f.embedding.clone()).collect();
    let data = LabeledEmbeddings::new(emb, labels.clone(), classes).unwrap();
    let upstream = discriminative_loss_grad(&data, &cents).unwrap();
    for (f, g) in fwd.iter().zip(&upstream) {
        net.backward(&f.tape, g).unwrap();
    }
    let analytic: Vec<Vec<f64>> = net.grads().iter().map(|g| g.to_vec()).collect();

    let mut worst = 0.0f64;
    for (group, grads) in analytic.iter().enumerate() {
        for (p, &a) in grads.iter().enumerate() {
            let orig = net.params()[group][p];
            net.params_mut()[group][p] = orig + H;
            let up = batch_loss(&net, &inputs, &labels, &cents);
            net.params_mut()[group][p] = orig - H;
            let down = batch_loss(&net, &inputs, &labels, &cents);
            net.params_mut()[group][p] = orig;
            let numeric = (up - down) / (2.0 * H);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}
