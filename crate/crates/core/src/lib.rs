//! Deep metric learning with fixed class centroids.
//!
//! The discriminative loss replaces the cubic triplet loss with a sum over
//! `N·C` embedding-to-centroid distances that upper-bounds it exactly. This
//! crate provides the loss and its gradient, the brute-force triplet oracles
//! it is checked against, centroid generators, a small embedding network, a
//! mini-batch trainer, retrieval metrics and a scaling benchmark.

pub mod bench;
pub mod centroids;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod kmeans;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod trainer;

pub use centroids::{CentroidSet, CentroidStats};
pub use datasets::LabeledDataset;
pub use error::{Error, Result};
pub use linalg::{RealMatrix, RealVector, SeededRng};
pub use losses::{LabeledEmbeddings, LossReport};
pub use model::{EmbedNet, NetSpec};
pub use trainer::{EpochStats, LossKind, TrainConfig};
