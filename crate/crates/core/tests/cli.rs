use std::path::Path;
use std::process::{Command, Output};

use dml_core::centroids::{one_hot_centroids, CentroidSet};
use dml_core::datasets::{save_csv, synth_gaussian_classes, LabeledDataset};
use dml_core::linalg::SeededRng;
use dml_core::model::{EmbedNet, NetSpec};
use serde_json::Value;
use tempfile::TempDir;

fn dml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dml"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_synth(dir: &Path, name: &str, classes: usize, per_class: usize, feat_dim: usize, seed: u64) -> std::path::PathBuf {
    let data = synth_gaussian_classes(classes, per_class, feat_dim, 0.1, &mut SeededRng::new(seed)).unwrap();
    let path = dir.join(name);
    save_csv(&data, &path).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn one_hot_centroid_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c.json");
    let o = dml(&["gen-centroids", "--strategy", "one-hot", "--classes", "8", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let set = CentroidSet::load(&out).unwrap();
    let s = set.stats();
    let r2 = std::f64::consts::SQRT_2;
    assert_eq!((s.kappa_min, s.kappa_max, s.mean, s.std), (r2, r2, r2, 0.0));
    let doc = read_json(&out);
    assert_eq!(doc["dim"], 8);
    assert_eq!(doc["centroids"].as_array().unwrap().len(), 8);
    assert!(String::from_utf8_lossy(&o.stderr).contains("min dist 1.4142"));
}

#[test]
fn usage_errors_exit_2() {
    let o = dml(&["gen-centroids", "--strategy", "one-hot"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(dml(&["gen-centroids", "--classes", "4", "--dim", "5"]).status.code(), Some(2));
    assert_eq!(dml(&["gen-centroids", "--classes", "1"]).status.code(), Some(2));
    assert_eq!(dml(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(dml(&["--help"]).status.code(), Some(0));
}

#[test]
fn kmeans_centroids_match_reported_statistics() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("k.json");
    let o = dml(&[
        "gen-centroids", "--strategy", "kmeans", "--classes", "100", "--dim", "100", "--seed", "7", "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = CentroidSet::load(&out).unwrap().stats();
    assert!((1.13..=1.29).contains(&s.kappa_min), "{s:?}");
    assert!((1.55..=1.71).contains(&s.kappa_max), "{s:?}");
    assert!((1.39..=1.45).contains(&s.mean), "{s:?}");
    assert!(s.std <= 0.09, "{s:?}");
}

#[test]
fn data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let data = write_synth(dir.path(), "d.csv", 4, 6, 5, 1);

    // wrong centroid count
    let cents = dir.path().join("c.json");
    one_hot_centroids(3).unwrap().save(&cents).unwrap();
    let ck = dir.path().join("net.json");
    let o = dml(&["train", "--data", p(&data), "--centroids", p(&cents), "--batch-size", "8", "--epochs", "1", "--out", p(&ck)]);
    assert_eq!(o.status.code(), Some(3));

    // checkpoint input dimension differs from the dataset
    EmbedNet::init(NetSpec::new(7, 4), &mut SeededRng::new(0)).unwrap().save(&ck).unwrap();
    assert_eq!(dml(&["eval", "--checkpoint", p(&ck), "--data", p(&data)]).status.code(), Some(3));

    let ragged = dir.path().join("bad.csv");
    std::fs::write(&ragged, "label,f1,f2\na,1.0,2.0\nb,3.0\n").unwrap();
    let o = dml(&["verify-bound", "--data", p(&ragged)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let missing = dir.path().join("absent.csv");
    assert_eq!(dml(&["verify-bound", "--data", p(&missing)]).status.code(), Some(3));
}

#[test]
fn eval_report_schema_is_stable() {
    let dir = TempDir::new().unwrap();
    let data = write_synth(dir.path(), "test.csv", 3, 10, 6, 2);
    let ck = dir.path().join("net.json");
    EmbedNet::init(NetSpec::new(6, 3), &mut SeededRng::new(5)).unwrap().save(&ck).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = dml(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--out", p(out)]);
        assert_eq!(o.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("NMI\tR@1\tR@2\tR@4\tR@8\n"));
    }
    let doc = read_json(&a);
    assert_eq!(doc, read_json(&b));
    let obj = doc.as_object().unwrap();
    let mut keys: Vec<&String> = obj.keys().collect();
    keys.sort();
    assert_eq!(keys, ["n_queries", "nmi", "recall_at"]);
    assert_eq!(doc["n_queries"], 30);
    let recall = doc["recall_at"].as_object().unwrap();
    let ks: Vec<&str> = recall.keys().map(String::as_str).collect();
    assert_eq!(ks, ["1", "2", "4", "8"]);
    let values: Vec<f64> = ks.iter().map(|k| recall[*k].as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn verify_bound_on_random_checkpoint() {
    let dir = TempDir::new().unwrap();
    let data = write_synth(dir.path(), "d.csv", 4, 6, 5, 3);
    let ck = dir.path().join("net.json");
    EmbedNet::init(NetSpec::new(5, 4), &mut SeededRng::new(9)).unwrap().save(&ck).unwrap();
    let out = dir.path().join("report.json");
    let o = dml(&["verify-bound", "--data", p(&data), "--checkpoint", p(&ck), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    let (gap, bound) = (r["gap"].as_f64().unwrap(), r["lemma_bound"].as_f64().unwrap());
    assert!(0.0 <= gap && gap <= bound);
    // 6 per class: H = 5 * 24 * 18
    assert_eq!(r["h_const"].as_f64().unwrap(), 2160.0);
    assert_eq!(r["g_const"].as_f64().unwrap(), 3.0 * 3.0 * 5.0 * 6.0);
}

#[test]
fn verify_bound_is_tight_at_one_hot_centroids() {
    let dir = TempDir::new().unwrap();
    let (classes, per) = (4, 3);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for _ in 0..per {
            let mut e = vec![0.0; classes];
            e[c] = 1.0;
            features.push(e);
            labels.push(c);
        }
    }
    let data = dir.path().join("pinned.csv");
    save_csv(&LabeledDataset::new(features, labels, None).unwrap(), &data).unwrap();
    let out = dir.path().join("report.json");
    let o = dml(&["verify-bound", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out);
    assert_eq!(r["gap"].as_f64().unwrap(), 0.0);
    assert_eq!(r["lemma_bound"].as_f64().unwrap(), 0.0);
    assert_eq!(r["epsilon"].as_f64().unwrap(), 0.0);
}

#[test]
fn verify_bound_guards_large_inputs() {
    let dir = TempDir::new().unwrap();
    let data = write_synth(dir.path(), "big.csv", 4, 60, 4, 4);
    assert_eq!(dml(&["verify-bound", "--data", p(&data)]).status.code(), Some(2));
    assert_eq!(dml(&["verify-bound", "--data", p(&data), "--max-n", "100"]).status.code(), Some(2));
    assert_eq!(dml(&["verify-bound", "--data", p(&data), "--force"]).status.code(), Some(0));
}

#[test]
fn train_dispatches_both_losses_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let data = write_synth(dir.path(), "d.csv", 4, 10, 6, 5);
    for loss in ["discriminative", "triplet"] {
        let ck = dir.path().join(format!("{loss}.json"));
        let log = dir.path().join(format!("{loss}.ndjson"));
        let o = dml(&[
            "train", "--data", p(&data), "--loss", loss, "--epochs", "3", "--batch-size", "8", "--hidden", "16",
            "--checkpoint-every", "2", "--log", p(&log), "--out", p(&ck),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let net = EmbedNet::load(&ck).unwrap();
        assert_eq!(net.spec(), NetSpec { input_dim: 6, hidden_dim: 16, output_dim: 4 });
        assert!(net.step() > 0);
        assert!(ck.with_extension("epoch2.json").exists());
        let lines: Vec<Value> = std::fs::read_to_string(&log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        let triplets = lines[0]["triplets"].as_u64().unwrap();
        assert_eq!(triplets > 0, loss == "triplet");
    }
}

#[test]
fn train_reads_config_file_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    let data = write_synth(dir.path(), "d.csv", 2, 8, 3, 6);
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"epochs": 2, "batch_size": 4, "hidden_dim": 8, "seed": 3}"#).unwrap();
    let log = dir.path().join("log.ndjson");
    let ck = dir.path().join("net.json");
    let o = dml(&["train", "--data", p(&data), "--config", p(&cfg), "--epochs", "1", "--log", p(&log), "--out", p(&ck)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 1);
    let net = EmbedNet::load(&ck).unwrap();
    assert_eq!(net.spec().hidden_dim, 8);
    // 8 per class at 2 per batch slot -> 4 batches
    assert_eq!(net.step(), 4);

    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(dml(&["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&ck)]).status.code(), Some(2));
}

#[test]
fn synth_split_writes_disjoint_class_files() {
    let dir = TempDir::new().unwrap();
    let (tr, te) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    let o = dml(&[
        "synth", "--classes", "6", "--per-class", "4", "--feat-dim", "3", "--split", "0.5", "--out-train", p(&tr),
        "--out-test", p(&te),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let train = dml_core::datasets::load_csv(&tr).unwrap();
    let test = dml_core::datasets::load_csv(&te).unwrap();
    assert_eq!((train.num_classes(), test.num_classes()), (3, 3));
    let names = |d: &LabeledDataset| d.class_names().unwrap().to_vec();
    assert!(names(&train).iter().all(|n| !names(&test).contains(n)));
}

#[test]
fn bench_emits_csv() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench.csv");
    let o = dml(&[
        "bench", "--classes", "4", "--batch-size", "8", "--n-ladder", "16,32", "--batch-ladder", "8,16", "--class-ladder",
        "2,4", "--repeats", "1", "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("sweep,loss,n,classes,batch"));
    assert_eq!(text.lines().count(), 1 + 4 + 2 + 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("slowdown_at_smallest_n"));
}
