//! Two-layer embedding network with a unit-normalization head and manual
//! backpropagation.
//!
//! `input → Dense(hidden) → ReLU → Dense(C) → x/||x||`
//!
//! The C-dimensional normalized output feeds the training loss. The
//! rectified hidden activation, unit-normalized, is the embedding used for
//! retrieval on unseen classes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{unit_normalize, unit_normalize_vjp, RealMatrix, SeededRng};

pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Number of training classes; the output lives in `R^C`.
    pub output_dim: usize,
}

impl NetSpec {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: DEFAULT_HIDDEN,
            output_dim,
        }
    }
}

/// Fully connected layer `y = W x + b`, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: RealMatrix,
    pub bias: Vec<f64>,
    pub grad_weights: RealMatrix,
    pub grad_bias: Vec<f64>,
}

impl Dense {
    fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: RealMatrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            grad_weights: RealMatrix::zeros(outputs, inputs),
            grad_bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weights.matvec(x);
        y.iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        y
    }

    fn zero_grad(&mut self) {
        self.grad_weights.as_mut_slice().fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// Unit-norm `C`-dimensional output.
    pub embedding: Vec<f64>,
    /// Rectified hidden activation (not normalized).
    pub hidden: Vec<f64>,
    pub tape: Tape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedNet {
    spec: NetSpec,
    pub layer1: Dense,
    pub layer2: Dense,
    seed: u64,
    step: u64,
}

impl EmbedNet {
    /// He-scaled normal weights, zero biases.
    pub fn init(spec: NetSpec, rng: &mut SeededRng) -> Result<Self> {
        if spec.input_dim == 0 || spec.hidden_dim == 0 || spec.output_dim == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        let mut net = Self {
            spec,
            layer1: Dense::new(spec.input_dim, spec.hidden_dim),
            layer2: Dense::new(spec.hidden_dim, spec.output_dim),
            seed: rng.seed(),
            step: 0,
        };
        for layer in [&mut net.layer1, &mut net.layer2] {
            let fan_in = layer.weights.cols() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = normal.sample(rng));
        }
        Ok(net)
    }

    pub fn spec(&self) -> NetSpec {
        self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn forward(&self, input: &[f64]) -> Result<Forward> {
        if input.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: input.len(),
            });
        }
        let pre_hidden = self.layer1.forward(input);
        let hidden: Vec<f64> = pre_hidden.iter().map(|&v| v.max(0.0)).collect();
        let logits = self.layer2.forward(&hidden);
        let embedding = unit_normalize(&logits)?;
        Ok(Forward {
            embedding,
            hidden: hidden.clone(),
            tape: Tape {
                input: input.to_vec(),
                pre_hidden,
                hidden,
                logits,
            },
        })
    }

    /// Unit-normalized hidden activation; the retrieval embedding.
    pub fn retrieval_embedding(&self, input: &[f64]) -> Result<Vec<f64>> {
        let fwd = self.forward_hidden(input)?;
        unit_normalize(&fwd)
    }

    fn forward_hidden(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: input.len(),
            });
        }
        Ok(self.layer1.forward(input).into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn zero_grad(&mut self) {
        self.layer1.zero_grad();
        self.layer2.zero_grad();
    }

    /// Accumulates parameter gradients given `∂loss/∂embedding` for the
    /// sample recorded on `tape`.
    pub fn backward(&mut self, tape: &Tape, upstream: &[f64]) -> Result<()> {
        if upstream.len() != self.spec.output_dim
            || tape.logits.len() != self.spec.output_dim
            || tape.input.len() != self.spec.input_dim
            || tape.hidden.len() != self.spec.hidden_dim
        {
            return Err(Error::Shape("tape or upstream gradient does not match the network".into()));
        }
        let g_logits = unit_normalize_vjp(&tape.logits, upstream)?;
        self.layer2.grad_weights.add_outer(&g_logits, &tape.hidden);
        self.layer2
            .grad_bias
            .iter_mut()
            .zip(&g_logits)
            .for_each(|(g, v)| *g += v);

        let mut g_hidden = self.layer2.weights.matvec_t(&g_logits);
        g_hidden
            .iter_mut()
            .zip(&tape.pre_hidden)
            .for_each(|(g, &p)| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
        self.layer1.grad_weights.add_outer(&g_hidden, &tape.input);
        self.layer1
            .grad_bias
            .iter_mut()
            .zip(&g_hidden)
            .for_each(|(g, v)| *g += v);
        Ok(())
    }

    /// Parameter buffers in a fixed order: W1, b1, W2, b2.
    pub fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.layer1.weights.as_mut_slice(),
            &mut self.layer1.bias,
            self.layer2.weights.as_mut_slice(),
            &mut self.layer2.bias,
        ]
    }

    pub fn params(&self) -> [&[f64]; 4] {
        [
            self.layer1.weights.as_slice(),
            &self.layer1.bias,
            self.layer2.weights.as_slice(),
            &self.layer2.bias,
        ]
    }

    /// Gradient buffers matching [`Self::params`].
    pub fn grads(&self) -> [&[f64]; 4] {
        [
            self.layer1.grad_weights.as_slice(),
            &self.layer1.grad_bias,
            self.layer2.grad_weights.as_slice(),
            &self.layer2.grad_bias,
        ]
    }

    /// `θ ← θ − lr·(∂θ + weight_decay·θ)` for every parameter.
    pub fn sgd_step(&mut self, lr: f64, weight_decay: f64) {
        for layer in [&mut self.layer1, &mut self.layer2] {
            for (w, g) in layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(layer.grad_weights.as_slice())
            {
                *w -= lr * (g + weight_decay * *w);
            }
            for (b, g) in layer.bias.iter_mut().zip(&layer.grad_bias) {
                *b -= lr * (g + weight_decay * *b);
            }
        }
        self.step += 1;
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let layer = |d: &Dense| LayerDoc {
            rows: d.weights.rows(),
            cols: d.weights.cols(),
            weights: d.weights.as_slice().to_vec(),
            bias: d.bias.clone(),
        };
        Checkpoint {
            spec: self.spec,
            seed: self.seed,
            step: self.step,
            layers: vec![layer(&self.layer1), layer(&self.layer2)],
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let spec = ck.spec;
        if ck.layers.len() != 2 {
            return Err(Error::Shape(format!("expected 2 layers, got {}", ck.layers.len())));
        }
        let shapes = [(spec.hidden_dim, spec.input_dim), (spec.output_dim, spec.hidden_dim)];
        let mut layers = Vec::with_capacity(2);
        for (doc, (rows, cols)) in ck.layers.into_iter().zip(shapes) {
            if (doc.rows, doc.cols) != (rows, cols) || doc.bias.len() != rows {
                return Err(Error::Shape(format!(
                    "layer is {}x{} with {} biases, expected {rows}x{cols}",
                    doc.rows,
                    doc.cols,
                    doc.bias.len()
                )));
            }
            let mut d = Dense::new(cols, rows);
            d.weights = RealMatrix::from_vec(rows, cols, doc.weights)?;
            d.bias = doc.bias;
            layers.push(d);
        }
        let layer2 = layers.pop().unwrap();
        let layer1 = layers.pop().unwrap();
        Ok(Self {
            spec,
            layer1,
            layer2,
            seed: ck.seed,
            step: ck.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_checkpoint(ck)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_checkpoint()).expect("checkpoint serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// JSON checkpoint: shapes plus row-major entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(flatten)]
    pub spec: NetSpec,
    pub seed: u64,
    pub step: u64,
    pub layers: Vec<LayerDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDoc {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}
