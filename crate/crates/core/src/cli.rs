//! `dml` command-line front end.
//!
//! Exit codes: 0 success, 1 internal failure (including a violated bound),
//! 2 usage or configuration error, 3 data or shape mismatch.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{run_bench, BenchConfig};
use crate::centroids::{default_kmeans_points, kmeans_sphere_centroids, one_hot_centroids, CentroidSet};
use crate::datasets::{load_csv, oversample_to_balance, save_csv, split_disjoint_classes, synth_gaussian_classes, LabeledDataset};
use crate::error::Error;
use crate::evaluation::evaluate;
use crate::linalg::{unit_normalize, SeededRng};
use crate::losses::{lemma_gap_report, LabeledEmbeddings};
use crate::model::{EmbedNet, NetSpec, DEFAULT_HIDDEN};
use crate::trainer::{train, LossKind, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug)]
struct CliError {
    code: i32,
    msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, msg: msg.into() }
    }

    fn data(msg: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, msg: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            Error::DimensionMismatch { .. }
            | Error::Shape(_)
            | Error::Parse { .. }
            | Error::Unbalanced(_)
            | Error::NoTriplets
            | Error::Io(_)
            | Error::Json(_) => EXIT_DATA,
            _ => EXIT_INTERNAL,
        };
        Self { code, msg: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "dml", version, about = "Deep metric learning with a linear-time triplet upper bound")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a fixed centroid set and print its distance statistics.
    GenCentroids(GenCentroidsArgs),
    /// Write a synthetic dataset (optionally split into disjoint-class train/test CSVs).
    Synth(SynthArgs),
    /// Train the embedding network on a CSV dataset.
    Train(TrainArgs),
    /// Recall@K and NMI of a checkpoint on held-out classes.
    Eval(EvalArgs),
    /// Compute both losses and check the gap bound on a small dataset.
    VerifyBound(VerifyArgs),
    /// Time one epoch of each loss over size ladders.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Strategy {
    OneHot,
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Discriminative,
    Triplet,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with defaults; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenCentroidsArgs {
    #[arg(long, value_enum, default_value = "one-hot")]
    strategy: Strategy,
    #[arg(long)]
    classes: usize,
    /// Sphere dimension for k-means (defaults to the class count).
    #[arg(long)]
    dim: Option<usize>,
    /// Number of uniform sphere samples for k-means.
    #[arg(long)]
    points: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    per_class: usize,
    #[arg(long)]
    feat_dim: usize,
    #[arg(long, default_value_t = 0.15)]
    spread: f64,
    /// Also split classes into train/test files with this fraction of classes for training.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    out_train: Option<PathBuf>,
    #[arg(long)]
    out_test: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Centroid JSON from `gen-centroids`; generated from --strategy when absent.
    #[arg(long)]
    centroids: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay_factor: Option<f64>,
    #[arg(long)]
    lr_decay_every: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    /// NDJSON run log, one line per epoch.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also write `<out>.epoch<K>.json` every K epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Embed with this network; otherwise the raw features (unit-normalized) are the embeddings.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    centroids: Option<PathBuf>,
    /// Refuse datasets larger than this unless --force is given.
    #[arg(long, default_value_t = 200)]
    max_n: usize,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_ladder: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    batch_ladder: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    class_ladder: Option<Vec<usize>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[command(flatten)]
    common: Common,
}

/// Settings shared by `train`, readable from `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    #[serde(flatten)]
    train: TrainConfig,
    strategy: Strategy,
    kmeans_points: Option<usize>,
    hidden_dim: usize,
    checkpoint_every: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            strategy: Strategy::OneHot,
            kmeans_points: None,
            hidden_dim: DEFAULT_HIDDEN,
            checkpoint_every: None,
        }
    }
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::GenCentroids(a) => cmd_gen_centroids(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::VerifyBound(a) => cmd_verify_bound(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            e.code
        }
    }
}

fn make_centroids(strategy: Strategy, classes: usize, dim: Option<usize>, points: Option<usize>, seed: u64) -> CliResult<CentroidSet> {
    Ok(match strategy {
        Strategy::OneHot => {
            if dim.is_some_and(|d| d != classes) {
                return Err(CliError::usage("one-hot centroids live in R^C; --dim must equal --classes"));
            }
            one_hot_centroids(classes)?
        }
        Strategy::Kmeans => {
            let points = points.unwrap_or_else(|| default_kmeans_points(classes));
            kmeans_sphere_centroids(classes, dim.unwrap_or(classes), points, &mut SeededRng::new(seed))?
        }
    })
}

fn cmd_gen_centroids(a: GenCentroidsArgs) -> CliResult<()> {
    let seed = a.common.seed.unwrap_or(0);
    let set = make_centroids(a.strategy, a.classes, a.dim, a.points, seed)?;
    emit(a.common.out.as_deref(), &set.to_json()?)?;
    let s = set.stats();
    eprintln!(
        "min dist {:.4}  max dist {:.4}  mean dist {:.4}  std dist {:.4}",
        s.kappa_min, s.kappa_max, s.mean, s.std
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let mut rng = SeededRng::new(a.common.seed.unwrap_or(0));
    let data = synth_gaussian_classes(a.classes, a.per_class, a.feat_dim, a.spread, &mut rng)?;
    match a.split {
        None => {
            let out = a.common.out.ok_or_else(|| CliError::usage("--out is required without --split"))?;
            save_csv(&data, out)?;
        }
        Some(fraction) => {
            let (train, test) = split_disjoint_classes(&data, fraction, &mut rng)?;
            let (Some(tr), Some(te)) = (a.out_train, a.out_test) else {
                return Err(CliError::usage("--split needs --out-train and --out-test"));
            };
            save_csv(&train, tr)?;
            save_csv(&test, te)?;
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut rc: RunConfig = read_config(a.common.config.as_deref())?;
    if let Some(s) = a.common.seed {
        rc.train.seed = s;
    }
    if let Some(l) = a.loss {
        rc.train.loss_kind = match l {
            LossArg::Discriminative => LossKind::Discriminative,
            LossArg::Triplet => LossKind::TripletBruteforce,
        };
    }
    macro_rules! override_with {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = a.$flag { $field = v; })*
        };
    }
    override_with!(
        epochs => rc.train.epochs,
        batch_size => rc.train.batch_size,
        lr => rc.train.lr_init,
        lr_decay_factor => rc.train.lr_decay_factor,
        lr_decay_every => rc.train.lr_decay_every,
        weight_decay => rc.train.weight_decay,
        hidden => rc.hidden_dim,
        strategy => rc.strategy,
    );
    if a.checkpoint_every.is_some() {
        rc.checkpoint_every = a.checkpoint_every;
    }
    let out = a.common.out.ok_or_else(|| CliError::usage("--out <checkpoint path> is required"))?;

    let seed = rc.train.seed;
    let root = SeededRng::new(seed);
    let raw = load_csv(&a.data)?;
    let data = oversample_to_balance(&raw, &mut root.derive(101))?;
    let classes = data.num_classes();
    rc.train.validate(classes)?;

    let cents = match &a.centroids {
        Some(p) => CentroidSet::load(p)?,
        None => make_centroids(rc.strategy, classes, None, rc.kmeans_points, root.derive(102).seed())?,
    };
    if cents.len() != classes {
        return Err(CliError::data(format!(
            "{} centroids but the dataset has {classes} classes",
            cents.len()
        )));
    }
    let spec = NetSpec {
        input_dim: data.feature_dim(),
        hidden_dim: rc.hidden_dim,
        output_dim: cents.dim(),
    };
    let mut net = EmbedNet::init(spec, &mut root.derive(103))?;
    let cents_hash = cents.content_hash();

    let mut log: Option<File> = match &a.log {
        Some(p) => Some(File::create(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let every = rc.checkpoint_every;
    let stats = train(&mut net, &data, &cents, &rc.train, |net, s| {
        if let Some(f) = log.as_mut() {
            writeln!(f, "{}", serde_json::to_string(s)?)?;
        }
        if let Some(k) = every {
            if k > 0 && (s.epoch + 1) % k == 0 {
                net.save(out.with_extension(format!("epoch{}.json", s.epoch + 1)))?;
            }
        }
        eprintln!("epoch {:>3}  loss {:>14.6}  {:.3}s", s.epoch, s.mean_loss, s.seconds);
        Ok(())
    })
    .map_err(CliError::from)?;
    if cents.content_hash() != cents_hash {
        return Err(CliError { code: EXIT_INTERNAL, msg: "centroids changed during training".into() });
    }
    net.save(&out)?;
    eprintln!(
        "trained {} epochs on {} samples; checkpoint {}",
        stats.len(),
        data.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let net = EmbedNet::load(&a.checkpoint)?;
    let data = load_csv(&a.data)?;
    if data.feature_dim() != net.spec().input_dim {
        return Err(CliError::data(format!(
            "checkpoint expects {} features, dataset has {}",
            net.spec().input_dim,
            data.feature_dim()
        )));
    }
    let report = evaluate(&net, &data, a.common.seed.unwrap_or(0))?;
    print!("{}", report.table());
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    if let Some(out) = a.common.out.as_deref() {
        emit(Some(out), &json)?;
    } else {
        println!("{json}");
    }
    Ok(())
}

fn embed_for_bound(data: &LabeledDataset, net: Option<&EmbedNet>) -> CliResult<Vec<Vec<f64>>> {
    data.features()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let r = match net {
                Some(n) => n.forward(f).map(|fw| fw.embedding),
                None => unit_normalize(f),
            };
            r.map_err(|e| CliError::data(format!("sample {i}: {e}")))
        })
        .collect()
}

fn cmd_verify_bound(a: VerifyArgs) -> CliResult<()> {
    let data = load_csv(&a.data)?;
    if data.len() > a.max_n && !a.force {
        return Err(CliError::usage(format!(
            "{} samples exceeds the brute-force guard of {}; pass --force to run anyway",
            data.len(),
            a.max_n
        )));
    }
    let net = match &a.checkpoint {
        Some(p) => Some(EmbedNet::load(p)?),
        None => None,
    };
    if let Some(n) = &net {
        if n.spec().input_dim != data.feature_dim() {
            return Err(CliError::data("checkpoint input dimension does not match the dataset"));
        }
    }
    let cents = match &a.centroids {
        Some(p) => CentroidSet::load(p)?,
        None => one_hot_centroids(data.num_classes())?,
    };
    let embeddings = embed_for_bound(&data, net.as_ref())?;
    let emb = LabeledEmbeddings::new(embeddings, data.labels().to_vec(), data.num_classes())?;
    let report = lemma_gap_report(&emb, &cents)?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    emit(a.common.out.as_deref(), &json)?;
    eprintln!("gap {:.6e} within bound {:.6e}", report.gap, report.lemma_bound);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CliResult<()> {
    let mut cfg: BenchConfig = read_config(a.common.config.as_deref())?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(v) = a.classes {
        cfg.classes = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.n_ladder {
        cfg.n_ladder = v;
    }
    if let Some(v) = a.batch_ladder {
        cfg.batch_ladder = v;
    }
    if let Some(v) = a.class_ladder {
        cfg.class_ladder = v;
    }
    if let Some(v) = a.repeats {
        cfg.repeats = v;
    }
    let report = run_bench(&cfg)?;
    emit(a.common.out.as_deref(), &report.to_csv())?;
    let summary = serde_json::to_string_pretty(&report.summary).map_err(Error::from)?;
    eprintln!("{summary}");
    Ok(())
}
