//! Training-cost scaling benchmark: one epoch of each objective over ladders
//! of dataset size, batch size and class count, with exact operation counts
//! and fitted log-log growth exponents.

use serde::{Deserialize, Serialize};

use crate::centroids::{one_hot_centroids, CentroidSet};
use crate::datasets::{synth_gaussian_classes, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::SeededRng;
use crate::losses::triplet_count;
use crate::model::{EmbedNet, NetSpec, DEFAULT_HIDDEN};
use crate::trainer::{train_epoch, train_epoch_triplet_baseline, EpochStats, LossKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub classes: usize,
    pub batch_size: usize,
    /// Dataset sizes for the sweep at fixed `classes` and `batch_size`.
    pub n_ladder: Vec<usize>,
    /// Batch sizes for the per-batch triplet timing, at `fixed_n`.
    pub batch_ladder: Vec<usize>,
    /// Class counts for the discriminative sweep at `fixed_n`.
    pub class_ladder: Vec<usize>,
    pub fixed_n: usize,
    pub feat_dim: usize,
    pub hidden_dim: usize,
    /// Each cell is timed this many times; the fastest run is kept.
    pub repeats: usize,
    /// A timed run repeats the epoch until this much time has passed and
    /// reports the mean epoch time.
    pub min_sample_seconds: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            batch_size: 128,
            n_ladder: vec![512, 1024, 2048],
            batch_ladder: vec![64, 128, 256, 512],
            class_ladder: vec![4, 8, 16],
            fixed_n: 1024,
            feat_dim: 16,
            hidden_dim: DEFAULT_HIDDEN,
            repeats: 5,
            min_sample_seconds: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    N,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub sweep: Sweep,
    pub loss: LossKind,
    pub n: usize,
    pub classes: usize,
    pub batch: usize,
    pub batches: usize,
    pub epoch_seconds: f64,
    pub batch_seconds: f64,
    pub distance_evals: u64,
    pub triplets_per_batch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    /// Discriminative epoch time vs N.
    pub discriminative_exponent_n: f64,
    /// Discriminative epoch time vs C at fixed N.
    pub discriminative_exponent_c: f64,
    /// Triplet-baseline time per batch vs B.
    pub triplet_batch_exponent_b: f64,
    /// Triplet epoch time over discriminative epoch time at the smallest N.
    pub slowdown_at_smallest_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: BenchSummary,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "sweep,loss,n,classes,batch,batches,epoch_seconds,batch_seconds,distance_evals,triplets_per_batch\n",
        );
        for r in &self.rows {
            let sweep = match r.sweep {
                Sweep::N => "n",
                Sweep::B => "b",
                Sweep::C => "c",
            };
            let loss = match r.loss {
                LossKind::Discriminative => "discriminative",
                LossKind::TripletBruteforce => "triplet_bruteforce",
            };
            out.push_str(&format!(
                "{sweep},{loss},{},{},{},{},{:.6e},{:.6e},{},{}\n",
                r.n, r.classes, r.batch, r.batches, r.epoch_seconds, r.batch_seconds, r.distance_evals, r.triplets_per_batch
            ));
        }
        out
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("a fit needs at least two points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("log-log fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("x values must not all be equal"));
    }
    Ok(sxy / sxx)
}

/// A prepared benchmark cell: synthetic data, centroids and an initialized
/// network, ready to time one epoch at a time.
struct Cell {
    sweep: Sweep,
    loss: LossKind,
    n: usize,
    batch: usize,
    data: LabeledDataset,
    cents: CentroidSet,
    net: EmbedNet,
    train: TrainConfig,
    best: Option<EpochStats>,
}

impl Cell {
    fn prepare(cfg: &BenchConfig, sweep: Sweep, loss: LossKind, n: usize, classes: usize, batch: usize) -> Result<Self> {
        if n % classes != 0 || batch % classes != 0 || n < batch {
            return Err(Error::invalid(format!(
                "N = {n} and B = {batch} must be multiples of C = {classes} with N >= B"
            )));
        }
        let mut rng = SeededRng::new(cfg.seed);
        let data = synth_gaussian_classes(classes, n / classes, cfg.feat_dim, 0.3, &mut rng)?;
        let cents = one_hot_centroids(classes)?;
        let spec = NetSpec {
            input_dim: cfg.feat_dim,
            hidden_dim: cfg.hidden_dim,
            output_dim: classes,
        };
        let net = EmbedNet::init(spec, &mut rng.derive(1))?;
        let train = TrainConfig {
            epochs: 1,
            batch_size: batch,
            seed: cfg.seed,
            loss_kind: loss,
            ..TrainConfig::default()
        };
        Ok(Self {
            sweep,
            loss,
            n,
            batch,
            data,
            cents,
            net,
            train,
            best: None,
        })
    }

    /// Runs epochs from the initial parameters until `min_seconds` have
    /// passed; keeps the run with the fastest mean epoch.
    fn time_once(&mut self, min_seconds: f64) -> Result<()> {
        let mut total = 0.0;
        let mut epochs = 0;
        let mut stats = loop {
            let mut net = self.net.clone();
            let stats = match self.loss {
                LossKind::Discriminative => train_epoch(&mut net, &self.data, &self.cents, &self.train, 0)?,
                LossKind::TripletBruteforce => train_epoch_triplet_baseline(&mut net, &self.data, &self.train, 0)?,
            };
            total += stats.seconds;
            epochs += 1;
            if total >= min_seconds {
                break stats;
            }
        };
        stats.seconds = total / epochs as f64;
        if self.best.as_ref().is_none_or(|b| stats.seconds < b.seconds) {
            self.best = Some(stats);
        }
        Ok(())
    }

    fn row(&self) -> BenchRow {
        let s = self.best.as_ref().expect("cell was timed");
        let classes = self.data.num_classes();
        BenchRow {
            sweep: self.sweep,
            loss: self.loss,
            n: self.n,
            classes,
            batch: self.batch,
            batches: s.batches,
            epoch_seconds: s.seconds,
            batch_seconds: s.seconds / s.batches as f64,
            distance_evals: s.distance_evals,
            triplets_per_batch: match self.loss {
                LossKind::Discriminative => 0,
                LossKind::TripletBruteforce => triplet_count(self.batch, classes),
            },
        }
    }
}

/// Times one epoch of `loss` on a fresh synthetic problem; best of `repeats`.
pub fn time_cell(
    cfg: &BenchConfig,
    sweep: Sweep,
    loss: LossKind,
    n: usize,
    classes: usize,
    batch: usize,
) -> Result<BenchRow> {
    let mut cell = Cell::prepare(cfg, sweep, loss, n, classes, batch)?;
    for _ in 0..cfg.repeats.max(1) {
        cell.time_once(cfg.min_sample_seconds)?;
    }
    Ok(cell.row())
}

/// Runs every sweep. Repeats are interleaved across cells, so slow drift in
/// machine speed hits all cells alike instead of biasing the fitted exponents.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let mut cells = Vec::new();
    for &n in &cfg.n_ladder {
        for loss in [LossKind::Discriminative, LossKind::TripletBruteforce] {
            cells.push(Cell::prepare(cfg, Sweep::N, loss, n, cfg.classes, cfg.batch_size)?);
        }
    }
    for &b in &cfg.batch_ladder {
        cells.push(Cell::prepare(cfg, Sweep::B, LossKind::TripletBruteforce, cfg.fixed_n, cfg.classes, b)?);
    }
    for &c in &cfg.class_ladder {
        cells.push(Cell::prepare(cfg, Sweep::C, LossKind::Discriminative, cfg.fixed_n, c, cfg.batch_size)?);
    }
    for _ in 0..cfg.repeats.max(1) {
        for cell in cells.iter_mut() {
            cell.time_once(cfg.min_sample_seconds)?;
        }
    }
    let rows: Vec<BenchRow> = cells.iter().map(Cell::row).collect();

    let pick = |sweep: Sweep, loss: LossKind| -> Vec<&BenchRow> {
        rows.iter().filter(|r| r.sweep == sweep && r.loss == loss).collect()
    };
    let disc_n = pick(Sweep::N, LossKind::Discriminative);
    let trip_n = pick(Sweep::N, LossKind::TripletBruteforce);
    let trip_b = pick(Sweep::B, LossKind::TripletBruteforce);
    let disc_c = pick(Sweep::C, LossKind::Discriminative);

    let fit = |rs: &[&BenchRow], x: fn(&BenchRow) -> f64, y: fn(&BenchRow) -> f64| {
        let xs: Vec<f64> = rs.iter().map(|r| x(r)).collect();
        let ys: Vec<f64> = rs.iter().map(|r| y(r)).collect();
        fit_loglog(&xs, &ys)
    };
    let summary = BenchSummary {
        discriminative_exponent_n: fit(&disc_n, |r| r.n as f64, |r| r.epoch_seconds)?,
        discriminative_exponent_c: fit(&disc_c, |r| r.classes as f64, |r| r.epoch_seconds)?,
        triplet_batch_exponent_b: fit(&trip_b, |r| r.batch as f64, |r| r.batch_seconds)?,
        slowdown_at_smallest_n: trip_n[0].epoch_seconds / disc_n[0].epoch_seconds,
    };
    Ok(BenchReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_fit_recovers_power_laws() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(2.5)).collect();
        assert!((fit_loglog(&xs, &ys).unwrap() - 2.5).abs() < 1e-12);
        assert!(fit_loglog(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn small_bench_counts_are_exact() {
        let cfg = BenchConfig {
            classes: 4,
            batch_size: 8,
            n_ladder: vec![16, 32],
            batch_ladder: vec![8, 16],
            class_ladder: vec![2, 4],
            fixed_n: 32,
            feat_dim: 4,
            hidden_dim: 8,
            repeats: 1,
            min_sample_seconds: 0.0,
            seed: 1,
        };
        let report = run_bench(&cfg).unwrap();
        for r in &report.rows {
            match (r.sweep, r.loss) {
                (Sweep::N, LossKind::Discriminative) | (Sweep::C, LossKind::Discriminative) => {
                    assert_eq!(r.distance_evals, (r.n * r.classes) as u64)
                }
                (_, LossKind::TripletBruteforce) => {
                    assert_eq!(r.triplets_per_batch, triplet_count(r.batch, r.classes));
                    assert_eq!(r.distance_evals, 2 * r.triplets_per_batch * r.batches as u64);
                }
                _ => unreachable!(),
            }
        }
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), report.rows.len() + 1);
        assert!(time_cell(&cfg, Sweep::N, LossKind::Discriminative, 10, 4, 8).is_err());
    }
}
