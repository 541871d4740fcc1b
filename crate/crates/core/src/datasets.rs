//! Labeled feature datasets: synthetic generation, class-disjoint splits,
//! oversampling to balance, and CSV I/O.
//!
//! Labels are stored as zero-based class indices in first-appearance order.
//! The CSV form uses the original label strings when known, otherwise `1..C`.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{uniform_sphere_point, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    /// Labels must cover `0..C` with no gaps; `C ≥ 2`.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Option<Vec<String>>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        if num_classes < 2 {
            return Err(Error::invalid("a dataset needs at least 2 classes"));
        }
        let mut seen = vec![false; num_classes];
        labels.iter().for_each(|&y| seen[y] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("class {missing} has no samples")));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        for (i, f) in features.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: f.len(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("sample {i} has a non-finite feature")));
            }
        }
        if let Some(names) = &class_names {
            if names.len() != num_classes {
                return Err(Error::Shape(format!(
                    "{} class names for {num_classes} classes",
                    names.len()
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classes];
        self.labels.iter().for_each(|&y| sizes[y] += 1);
        sizes
    }

    pub fn is_balanced(&self) -> bool {
        let sizes = self.class_sizes();
        sizes.iter().all(|&s| s == sizes[0])
    }

    /// Indices of each class's samples, in index order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            members[y].push(i);
        }
        members
    }

    fn class_name(&self, class: usize) -> String {
        match &self.class_names {
            Some(names) => names[class].clone(),
            None => (class + 1).to_string(),
        }
    }
}

/// `classes` Gaussian blobs with means drawn uniformly on the unit sphere.
pub fn synth_gaussian_classes(
    classes: usize,
    per_class: usize,
    feat_dim: usize,
    spread: f64,
    rng: &mut SeededRng,
) -> Result<LabeledDataset> {
    if classes < 2 || per_class < 2 || feat_dim < 2 {
        return Err(Error::invalid(
            "need at least 2 classes, 2 samples per class and 2 feature dimensions",
        ));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::invalid("spread must be a nonnegative finite number"));
    }
    let mut features = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let mean = uniform_sphere_point(feat_dim, rng)?;
        for _ in 0..per_class {
            let point = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + spread * z
                })
                .collect();
            features.push(point);
            labels.push(class);
        }
    }
    LabeledDataset::new(features, labels, None)
}

/// Partitions classes (not samples) into a train and a test dataset.
/// `round(fraction·C)` classes go to training.
pub fn split_disjoint_classes(
    data: &LabeledDataset,
    train_fraction: f64,
    rng: &mut SeededRng,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let c = data.num_classes();
    let n_train = (train_fraction * c as f64).round() as usize;
    if !(0.0..=1.0).contains(&train_fraction) || n_train < 2 || c - n_train.min(c) < 2 {
        return Err(Error::invalid(format!(
            "splitting {c} classes with fraction {train_fraction} leaves fewer than 2 classes on one side"
        )));
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(rng);
    let mut is_train = vec![false; c];
    order[..n_train].iter().for_each(|&k| is_train[k] = true);

    let subset = |want_train: bool| {
        let idx: Vec<usize> = (0..data.len())
            .filter(|&i| is_train[data.labels[i]] == want_train)
            .collect();
        relabel_subset(data, &idx)
    };
    Ok((subset(true)?, subset(false)?))
}

/// Builds a dataset from the given rows with labels re-canonicalized in
/// first-appearance order.
fn relabel_subset(data: &LabeledDataset, idx: &[usize]) -> Result<LabeledDataset> {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut features = Vec::with_capacity(idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        let old = data.labels[i];
        let next = map.len();
        let new = *map.entry(old).or_insert_with(|| {
            names.push(data.class_name(old));
            next
        });
        features.push(data.features[i].clone());
        labels.push(new);
    }
    LabeledDataset::new(features, labels, Some(names))
}

/// Tops up every class to the size of the largest by duplicating randomly
/// chosen members of that class. Original rows keep their positions; the
/// duplicates are appended.
pub fn oversample_to_balance(data: &LabeledDataset, rng: &mut SeededRng) -> Result<LabeledDataset> {
    let members = data.class_members();
    let target = members.iter().map(Vec::len).max().unwrap_or(0);
    let mut features = data.features.clone();
    let mut labels = data.labels.clone();
    for (class, rows) in members.iter().enumerate() {
        for _ in rows.len()..target {
            let pick = rows[rng.random_range(0..rows.len())];
            features.push(data.features[pick].clone());
            labels.push(class);
        }
    }
    LabeledDataset::new(features, labels, data.class_names.clone())
}

/// Reads `label,f1,...,fF` rows. Labels may be any string; they are mapped to
/// class indices in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header_len = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .len();
    if header_len < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be `label,f1,...`".into(),
        });
    }

    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header_len {
            return Err(Error::Parse {
                line,
                msg: format!("row has {} fields, header has {header_len}", record.len()),
            });
        }
        let raw_label = record[0].trim().to_string();
        let next = index.len();
        let label = *index.entry(raw_label.clone()).or_insert_with(|| {
            names.push(raw_label);
            next
        });
        let row = record
            .iter()
            .skip(1)
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("non-numeric feature {field:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        features.push(row);
        labels.push(label);
    }
    if features.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no samples".into(),
        });
    }
    LabeledDataset::new(features, labels, Some(names))
}

pub fn save_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv(data))?;
    Ok(())
}

pub fn to_csv(data: &LabeledDataset) -> String {
    let mut out = String::from("label");
    for f in 1..=data.feature_dim() {
        out.push_str(&format!(",f{f}"));
    }
    out.push('\n');
    for (x, &y) in data.features.iter().zip(&data.labels) {
        out.push_str(&data.class_name(y));
        for v in x {
            // `{}` on f64 prints the shortest string that parses back exactly.
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::recall_at_k;
    use proptest::prelude::*;

    #[test]
    fn zero_spread_collapses_classes() {
        let d = synth_gaussian_classes(3, 4, 5, 0.0, &mut SeededRng::new(1)).unwrap();
        for rows in d.class_members() {
            for &i in &rows {
                assert_eq!(d.features()[i], d.features()[rows[0]]);
            }
        }
    }

    #[test]
    fn synthetic_classes_are_separable_on_raw_features() {
        let d = synth_gaussian_classes(10, 50, 8, 0.05, &mut SeededRng::new(2)).unwrap();
        let feats: Vec<Vec<f64>> = d.features().to_vec();
        let r = recall_at_k(&feats, d.labels(), &[1]).unwrap();
        assert!(r[&1] >= 0.99, "R@1 = {}", r[&1]);
        let again = synth_gaussian_classes(10, 50, 8, 0.05, &mut SeededRng::new(2)).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn disjoint_split_contract() {
        let d = synth_gaussian_classes(10, 6, 3, 0.1, &mut SeededRng::new(3)).unwrap();
        let (tr, te) = split_disjoint_classes(&d, 0.5, &mut SeededRng::new(4)).unwrap();
        assert_eq!(tr.num_classes(), 5);
        assert_eq!(te.num_classes(), 5);
        assert_eq!(tr.len() + te.len(), d.len());
        let tr_names: Vec<&String> = tr.class_names().unwrap().iter().collect();
        assert!(te.class_names().unwrap().iter().all(|n| !tr_names.contains(&n)));
        let (tr2, te2) = split_disjoint_classes(&d, 0.5, &mut SeededRng::new(4)).unwrap();
        assert_eq!((tr, te), (tr2, te2));
        assert!(split_disjoint_classes(&d, 0.9, &mut SeededRng::new(4)).is_err());
        let small = synth_gaussian_classes(3, 2, 2, 0.1, &mut SeededRng::new(3)).unwrap();
        assert!(split_disjoint_classes(&small, 0.5, &mut SeededRng::new(4)).is_err());
    }

    #[test]
    fn oversampling_contract() {
        let feats: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0]).collect();
        let labels = vec![0, 0, 0, 1, 1, 1, 1, 1];
        let d = LabeledDataset::new(feats, labels, None).unwrap();
        let b = oversample_to_balance(&d, &mut SeededRng::new(5)).unwrap();
        assert_eq!(b.class_sizes(), vec![5, 5]);
        assert_eq!(b.len(), 10);
        assert!(b.is_balanced());
        assert_eq!(&b.features()[..8], d.features());
        for i in 8..10 {
            assert_eq!(b.labels()[i], 0);
            assert!(b.features()[i][0] < 3.0);
        }
        let again = oversample_to_balance(&b, &mut SeededRng::new(6)).unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn csv_errors() {
        let ragged = "label,f1,f2\na,1,2\nb,3\n";
        match parse_csv(ragged) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_csv("label,f1\na,x\nb,1\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("non-numeric"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_csv("label,f1,f2\n") {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("no samples")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_csv("").is_err());
    }

    #[test]
    fn csv_labels_canonicalized_by_first_appearance() {
        let d = parse_csv("label,f1\ncat,1\ndog,2\ncat,3\n").unwrap();
        assert_eq!(d.labels(), &[0, 1, 0]);
        assert_eq!(d.class_names().unwrap(), &["cat".to_string(), "dog".to_string()]);
    }

    #[test]
    fn csv_file_round_trip() {
        let d = synth_gaussian_classes(3, 4, 3, 0.3, &mut SeededRng::new(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&d, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.features(), d.features());
        assert_eq!(back.labels(), d.labels());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(seed in 0u64..1000, c in 2usize..5, per in 2usize..5, dim in 2usize..5) {
            let d = synth_gaussian_classes(c, per, dim, 0.7, &mut SeededRng::new(seed)).unwrap();
            let back = parse_csv(&to_csv(&d)).unwrap();
            prop_assert_eq!(back.features(), d.features());
            prop_assert_eq!(back.labels(), d.labels());
        }

        #[test]
        fn split_is_always_disjoint(seed in 0u64..1000, c in 4usize..12) {
            let d = synth_gaussian_classes(c, 2, 2, 0.1, &mut SeededRng::new(seed)).unwrap();
            let (tr, te) = split_disjoint_classes(&d, 0.5, &mut SeededRng::new(seed + 1)).unwrap();
            let trn = tr.class_names().unwrap();
            prop_assert!(te.class_names().unwrap().iter().all(|n| !trn.contains(n)));
            prop_assert_eq!(tr.len() + te.len(), d.len());
        }
    }
}
