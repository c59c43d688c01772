//! Seeded randomness and the dense/sparse vector arithmetic used everywhere else.
//!
//! All randomness flows through [`RngStream`], a counter-style wrapper around
//! ChaCha8: a `(seed, stream_id)` pair fully determines the output sequence on
//! every platform, and distinct stream ids are statistically independent. Each
//! (worker, round, purpose) gets its own stream so parallel simulation is
//! schedule-independent.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{FpsError, Result};

/// A dense coordinate vector (model parameters, gradients, channel noise).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()), "non-finite entry");
        DenseVector(values)
    }

    pub fn zeros(n: usize) -> Self {
        DenseVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// `self += scale * other`, element-wise.
    pub fn axpy(&mut self, scale: f64, other: &DenseVector) {
        assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += scale * b;
        }
    }

    /// `self += scale * sparse`, touching only the stored coordinates.
    pub fn axpy_sparse(&mut self, scale: f64, other: &SparseVector) {
        assert_eq!(self.len(), other.dim());
        for &(i, v) in other.entries() {
            self.0[i] += scale * v;
        }
    }

    /// (l1, l2) norms.
    pub fn norms(&self) -> (f64, f64) {
        norms_of(self.0.iter().copied())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// A sparse vector over an ambient dimension `dim`: strictly increasing
/// indices, no stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Validates the representation invariants.
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut prev: Option<usize> = None;
        for &(i, v) in &entries {
            if i >= dim {
                return Err(FpsError::Config(format!(
                    "sparse index {i} out of range for dim {dim}"
                )));
            }
            if v == 0.0 {
                return Err(FpsError::Config(format!("stored zero at index {i}")));
            }
            if let Some(p) = prev {
                if i <= p {
                    return Err(FpsError::Config(format!(
                        "indices not strictly increasing at {i}"
                    )));
                }
            }
            prev = Some(i);
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector { dim, entries: Vec::new() }
    }

    /// Extracts the nonzero pattern of a dense vector.
    pub fn from_dense(v: &DenseVector) -> Self {
        let entries = v
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, x)| (i, *x))
            .collect();
        SparseVector { dim: v.len(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DenseVector {
        let mut out = DenseVector::zeros(self.dim);
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// (l1, l2) norms over stored entries.
    pub fn norms(&self) -> (f64, f64) {
        norms_of(self.entries.iter().map(|&(_, v)| v))
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }
}

fn norms_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut l1, mut l2sq) = (0.0, 0.0);
    for v in values {
        l1 += v.abs();
        l2sq += v * v;
    }
    (l1, l2sq.sqrt())
}

/// Sparse-dense inner product.
pub fn dot(a: &SparseVector, b: &DenseVector) -> Result<f64> {
    if a.dim() != b.len() {
        return Err(FpsError::Config(format!(
            "dot: dimension mismatch ({} vs {})",
            a.dim(),
            b.len()
        )));
    }
    Ok(a.entries().iter().map(|&(i, v)| v * b[i]).sum())
}

/// Builds a stream id from a purpose tag and two indices (e.g. client, round).
///
/// Purposes below 2^16, `a` below 2^16 and `b` below 2^32 never collide.
pub fn stream_id(purpose: u64, a: u64, b: u64) -> u64 {
    (purpose << 48) | ((a & 0xffff) << 32) | (b & 0xffff_ffff)
}

/// A deterministic random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn next_index(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }

    /// `amount` distinct indices drawn uniformly from `0..bound`, ascending.
    pub fn sample_distinct(&mut self, bound: usize, amount: usize) -> Vec<usize> {
        let mut picked = rand::seq::index::sample(&mut self.rng, bound, amount).into_vec();
        picked.sort_unstable();
        picked
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        Normal::new(mean, std).expect("valid std").sample(&mut self.rng)
    }

    /// Gamma(shape, 1) draw; the building block for Dirichlet sampling.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        rand_distr::Gamma::new(shape, 1.0)
            .expect("valid shape")
            .sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// `n` i.i.d. draws from N(mean, std^2); `std = 0` yields the constant vector.
pub fn sample_gaussian(rng: &mut RngStream, n: usize, mean: f64, std: f64) -> Result<DenseVector> {
    if std < 0.0 {
        return Err(FpsError::Config(format!("negative std {std}")));
    }
    if std == 0.0 {
        return Ok(DenseVector::new(vec![mean; n]));
    }
    let dist = Normal::new(mean, std).map_err(|e| FpsError::Config(e.to_string()))?;
    Ok(DenseVector::new(
        (0..n).map(|_| dist.sample(rng)).collect(),
    ))
}
