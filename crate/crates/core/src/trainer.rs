//! Mini-batch SGD with step-decayed learning rate.
//!
//! Two objectives share the loop: the closed-form discriminative loss against
//! fixed centroids, and the brute-force triplet loss enumerated within each
//! batch (the timing baseline). Batches are class-balanced so the closed form
//! is exact within every batch.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::centroids::CentroidSet;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{discriminative_loss, discriminative_loss_grad, triplet_loss_with_grad, LabeledEmbeddings};
use crate::linalg::SeededRng;
use crate::model::{EmbedNet, Forward};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Discriminative,
    #[serde(alias = "triplet")]
    TripletBruteforce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss_kind: LossKind,
    /// Step on the loss divided by its term count (G for the discriminative
    /// loss, H for the triplet loss) instead of the raw sum. The logged loss is
    /// always the raw sum.
    pub mean_reduction: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 128,
            lr_init: 0.1,
            lr_decay_factor: 0.5,
            lr_decay_every: 5,
            weight_decay: 0.0005,
            seed: 0,
            loss_kind: LossKind::Discriminative,
            mean_reduction: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_classes: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 || self.batch_size % train_classes != 0 {
            return Err(Error::invalid(format!(
                "batch size {} is not a positive multiple of the {train_classes} training classes",
                self.batch_size
            )));
        }
        if self.batch_size / train_classes < 2 {
            return Err(Error::invalid("batches need at least 2 samples per class"));
        }
        if !(self.lr_init >= 0.0 && self.lr_init.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and nonnegative"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::invalid("learning-rate decay factor must lie in (0, 1]"));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::invalid("lr_decay_every must be at least 1"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight decay must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// `lr_init · factor^⌊epoch / every⌋`, epochs counted from 0.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let steps = (epoch / cfg.lr_decay_every.max(1)) as i32;
    cfg.lr_init * cfg.lr_decay_factor.powi(steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
    pub batches: usize,
    /// Distance evaluations made by the loss (not the network).
    pub distance_evals: u64,
    pub triplets: u64,
}

/// Class-balanced index batches for one epoch.
///
/// Each batch takes `batch_size / C` samples from every class. Within a class
/// samples are drawn without replacement until the class is exhausted, then
/// with replacement, so an epoch of `⌈max class size / per-class⌉` batches
/// visits every sample at least once.
pub fn balanced_batch_sampler(
    data: &LabeledDataset,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<usize>>> {
    let c = data.num_classes();
    if batch_size == 0 || batch_size % c != 0 {
        return Err(Error::invalid(format!(
            "batch size {batch_size} is not divisible by {c} classes"
        )));
    }
    let per = batch_size / c;
    let mut queues = data.class_members();
    queues.iter_mut().for_each(|q| q.shuffle(rng));
    let largest = queues.iter().map(Vec::len).max().unwrap_or(0);
    let n_batches = largest.div_ceil(per);

    let mut batches = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let mut batch = Vec::with_capacity(batch_size);
        for q in &queues {
            for s in b * per..(b + 1) * per {
                let idx = match q.get(s) {
                    Some(&i) => i,
                    None => q[rng.random_range(0..q.len())],
                };
                batch.push(idx);
            }
        }
        batches.push(batch);
    }
    Ok(batches)
}

fn forward_batch(net: &EmbedNet, data: &LabeledDataset, batch: &[usize]) -> Result<Vec<Forward>> {
    batch
        .iter()
        .map(|&i| {
            net.forward(&data.features()[i]).map_err(|e| Error::Sample {
                sample: i,
                source: Box::new(e),
            })
        })
        .collect()
}

fn backward_batch(net: &mut EmbedNet, fwd: &[Forward], mut grads: Vec<Vec<f64>>, divisor: Option<f64>) -> Result<()> {
    if let Some(d) = divisor {
        grads.iter_mut().flatten().for_each(|v| *v /= d);
    }
    for (f, g) in fwd.iter().zip(&grads) {
        net.backward(&f.tape, g)?;
    }
    Ok(())
}

fn epoch_rng(cfg: &TrainConfig, epoch: usize) -> SeededRng {
    SeededRng::new(cfg.seed).derive(epoch as u64 + 1)
}

/// One epoch of the discriminative objective; centroids are read-only.
pub fn train_epoch(
    net: &mut EmbedNet,
    data: &LabeledDataset,
    cents: &CentroidSet,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    cfg.validate(data.num_classes())?;
    if cents.len() != data.num_classes() || cents.dim() != net.spec().output_dim {
        return Err(Error::Shape(format!(
            "{} centroids in R^{} for {} classes and a {}-dimensional network output",
            cents.len(),
            cents.dim(),
            data.num_classes(),
            net.spec().output_dim
        )));
    }
    let start = Instant::now();
    let lr = lr_at(epoch, cfg);
    let batches = balanced_batch_sampler(data, cfg.batch_size, &mut epoch_rng(cfg, epoch))?;
    let mut loss_sum = 0.0;
    let mut evals = 0u64;
    for batch in &batches {
        net.zero_grad();
        let fwd = forward_batch(net, data, batch)?;
        let labels: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
        let emb = LabeledEmbeddings::new(
            fwd.iter().map(|f| f.embedding.clone()).collect(),
            labels,
            data.num_classes(),
        )?;
        let loss = discriminative_loss(&emb, cents)?;
        let grads = discriminative_loss_grad(&emb, cents)?;
        backward_batch(net, &fwd, grads, cfg.mean_reduction.then_some(loss.g_const))?;
        net.sgd_step(lr, cfg.weight_decay);
        loss_sum += loss.value;
        evals += loss.distance_evals;
    }
    Ok(EpochStats {
        epoch,
        mean_loss: loss_sum / batches.len() as f64,
        seconds: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
        batches: batches.len(),
        distance_evals: evals,
        triplets: 0,
    })
}

/// One epoch of the triplet loss, fully enumerated within each batch.
pub fn train_epoch_triplet_baseline(
    net: &mut EmbedNet,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    cfg.validate(data.num_classes())?;
    let start = Instant::now();
    let lr = lr_at(epoch, cfg);
    let batches = balanced_batch_sampler(data, cfg.batch_size, &mut epoch_rng(cfg, epoch))?;
    let mut loss_sum = 0.0;
    let mut triplets = 0u64;
    for batch in &batches {
        net.zero_grad();
        let fwd = forward_batch(net, data, batch)?;
        let labels: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
        let emb = LabeledEmbeddings::new(
            fwd.iter().map(|f| f.embedding.clone()).collect(),
            labels,
            data.num_classes(),
        )?;
        let (sum, grads) = triplet_loss_with_grad(&emb)?;
        backward_batch(net, &fwd, grads, cfg.mean_reduction.then_some(sum.triplets as f64))?;
        net.sgd_step(lr, cfg.weight_decay);
        loss_sum += sum.total;
        triplets += sum.triplets;
    }
    Ok(EpochStats {
        epoch,
        mean_loss: loss_sum / batches.len() as f64,
        seconds: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
        batches: batches.len(),
        distance_evals: 2 * triplets,
        triplets,
    })
}

/// Runs every epoch of `cfg`, calling `on_epoch` after each.
pub fn train(
    net: &mut EmbedNet,
    data: &LabeledDataset,
    cents: &CentroidSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EmbedNet, &EpochStats) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let stats = match cfg.loss_kind {
            LossKind::Discriminative => train_epoch(net, data, cents, cfg, epoch)?,
            LossKind::TripletBruteforce => train_epoch_triplet_baseline(net, data, cfg, epoch)?,
        };
        on_epoch(net, &stats)?;
        log.push(stats);
    }
    Ok(log)
}
