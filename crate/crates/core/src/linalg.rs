//! Dense vectors, matrices and a seedable random stream.
//!
//! Everything is 64-bit. The hot loops in the loss and training code work on
//! plain `&[f64]` slices; [`RealVector`] is the checked owner type used at API
//! boundaries.

use std::ops::Deref;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as degenerate by [`unit_normalize`].
pub const NORM_FLOOR: f64 = 1e-8;

/// A finite, non-empty vector of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("vector dimension must be positive"));
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Self(vec![0.0; dim])
    }

    /// The `axis`-th standard basis vector of `R^dim`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[axis] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for RealVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for RealVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RealVector> for Vec<f64> {
    fn from(v: RealVector) -> Self {
        v.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// `selfᵀ · v`
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &scale) in v.iter().enumerate() {
            if scale == 0.0 {
                continue;
            }
            axpy(scale, self.row(r), &mut out);
        }
        out
    }

    /// Accumulates the outer product `a bᵀ` into `self`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            axpy(ar, b, self.row_mut(r));
        }
    }
}

/// Sum of `f(a[i], b[i])` over four interleaved accumulators, which lets the
/// compiler vectorize the loop. Summation order is fixed, so results are
/// deterministic.
#[inline]
fn lane_sum(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += f(x[l], y[l]);
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in ra.iter().zip(rb) {
        tail += f(x, y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    lane_sum(a, b, |x, y| x * y)
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Squared Euclidean distance without dimension checks.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    lane_sum(a, b, |x, y| (x - y) * (x - y))
}

/// Euclidean distance without dimension checks; for inner loops.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// `||a - b||₂`
pub fn euclid_dist(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dist(a, b))
}

/// Projects `z` onto the unit sphere.
pub fn unit_normalize(z: &[f64]) -> Result<Vec<f64>> {
    let n = norm(z);
    if !(n >= NORM_FLOOR) {
        return Err(Error::DegenerateNorm { norm: n });
    }
    Ok(z.iter().map(|v| v / n).collect())
}

/// Jacobian of `z ↦ z/||z||`, i.e. `(I − x xᵀ)/||z||` with `x = z/||z||`.
pub fn unit_normalize_jacobian(z: &[f64]) -> Result<RealMatrix> {
    let n = norm(z);
    if !(n >= NORM_FLOOR) {
        return Err(Error::DegenerateNorm { norm: n });
    }
    let d = z.len();
    let x: Vec<f64> = z.iter().map(|v| v / n).collect();
    let mut jac = RealMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let delta = if r == c { 1.0 } else { 0.0 };
            jac.set(r, c, (delta - x[r] * x[c]) / n);
        }
    }
    Ok(jac)
}

/// Vector-Jacobian product through the normalization layer without forming
/// the matrix: `(g − x (x·g)) / ||z||`. The Jacobian is symmetric, so this is
/// also the JVP.
pub fn unit_normalize_vjp(z: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let n = norm(z);
    if !(n >= NORM_FLOOR) {
        return Err(Error::DegenerateNorm { norm: n });
    }
    let xg: f64 = z.iter().zip(g).map(|(zi, gi)| zi * gi).sum::<f64>() / n;
    Ok(z
        .iter()
        .zip(g)
        .map(|(zi, gi)| (gi - zi / n * xg) / n)
        .collect())
}

/// Deterministic random stream. Identical seed and call sequence give
/// identical output.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent stream for a worker or sub-task, derived by seed offset.
    pub fn derive(&self, offset: u64) -> Self {
        Self::new(self.seed.wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// A vector with i.i.d. N(0, 1) entries.
pub fn standard_normal_vector(dim: usize, rng: &mut SeededRng) -> Result<RealVector> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    Ok(RealVector((0..dim).map(|_| StandardNormal.sample(rng)).collect()))
}

/// A point drawn uniformly from the unit sphere in `R^dim`.
pub fn uniform_sphere_point(dim: usize, rng: &mut SeededRng) -> Result<RealVector> {
    loop {
        let v = standard_normal_vector(dim, rng)?;
        // A Gaussian draw below the floor has probability ~0; redraw rather than fail.
        if let Ok(u) = unit_normalize(&v) {
            return Ok(RealVector(u));
        }
    }
}
