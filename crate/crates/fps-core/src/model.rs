//! Local objectives and their gradients: an application loss (squared error
//! or logistic) plus the proximal term `(mu/2) ||w - anchor||^2` pulling local
//! iterates toward the last broadcast model.

use serde::{Deserialize, Serialize};

use crate::error::{FpsError, Result};
use crate::numerics::{dot, DenseVector, SparseVector};

/// The application loss. Squared error is `(w.x - y)^2 / 2` per sample;
/// logistic is the negative log-likelihood of the sigmoid model, computed in
/// log-sum-exp form so large margins cannot overflow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    SquaredError,
    Logistic,
}

/// Numerically stable sigmoid.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Model parameters of one worker or the server.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub weights: DenseVector,
}

impl ModelState {
    pub fn zeros(dim: usize) -> Self {
        ModelState { weights: DenseVector::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.norm_sq()
    }
}

/// A gradient, sparse when its support is small relative to the dimension.
#[derive(Clone, Debug)]
pub enum Gradient {
    Sparse(SparseVector),
    Dense(DenseVector),
}

impl Gradient {
    pub fn dim(&self) -> usize {
        match self {
            Gradient::Sparse(s) => s.dim(),
            Gradient::Dense(d) => d.len(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match self {
            Gradient::Sparse(s) => s.norm_sq(),
            Gradient::Dense(d) => d.norm_sq(),
        }
    }

    pub fn to_dense(&self) -> DenseVector {
        match self {
            Gradient::Sparse(s) => s.to_dense(),
            Gradient::Dense(d) => d.clone(),
        }
    }

    /// Applies `target += scale * self`.
    pub fn apply_to(&self, target: &mut DenseVector, scale: f64) {
        match self {
            Gradient::Sparse(s) => target.axpy_sparse(scale, s),
            Gradient::Dense(d) => target.axpy(scale, d),
        }
    }
}

/// The restructured local loss `l(w) + (mu/2) ||w - anchor||^2`.
#[derive(Clone, Debug)]
pub struct ProximalObjective {
    pub base: BaseLoss,
    pub mu: f64,
    pub anchor: DenseVector,
}

impl ProximalObjective {
    pub fn new(base: BaseLoss, mu: f64, anchor: DenseVector) -> Result<Self> {
        if mu < 0.0 {
            return Err(FpsError::Config(format!("mu {mu} must be nonnegative")));
        }
        Ok(ProximalObjective { base, mu, anchor })
    }

    /// Model output for a sample: `w.x` for regression, `sigmoid(w.x)` for
    /// logistic.
    pub fn predict(&self, w: &DenseVector, x: &SparseVector) -> Result<f64> {
        let z = dot(x, w)?;
        Ok(match self.base {
            BaseLoss::SquaredError => z,
            BaseLoss::Logistic => sigmoid(z),
        })
    }

    fn sample_loss(&self, z: f64, y: f64) -> f64 {
        match self.base {
            BaseLoss::SquaredError => {
                let r = z - y;
                0.5 * r * r
            }
            BaseLoss::Logistic => log1p_exp(z) - y * z,
        }
    }

    /// d(sample loss)/dz.
    fn sample_factor(&self, z: f64, y: f64) -> f64 {
        match self.base {
            BaseLoss::SquaredError => z - y,
            BaseLoss::Logistic => sigmoid(z) - y,
        }
    }

    /// Mean per-sample loss over the batch plus the proximal term.
    pub fn minibatch_loss(&self, w: &DenseVector, batch: &[(&SparseVector, f64)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(FpsError::Usage("empty mini-batch".into()));
        }
        let mut total = 0.0;
        for &(x, y) in batch {
            total += self.sample_loss(dot(x, w)?, y);
        }
        let mut loss = total / batch.len() as f64;
        if self.mu > 0.0 {
            let mut diff_sq = 0.0;
            for (a, b) in w.as_slice().iter().zip(self.anchor.as_slice()) {
                let d = a - b;
                diff_sq += d * d;
            }
            loss += 0.5 * self.mu * diff_sq;
        }
        Ok(loss)
    }

    /// Mean base-loss gradient over the batch plus `mu (w - anchor)`.
    ///
    /// The result is sparse over the batch support when the proximal part
    /// vanishes, and otherwise sparse over the union of the batch support and
    /// the `w - anchor` support (densified when that union is most of the
    /// dimension). Per-coordinate accumulation order is the batch order on
    /// both representations, so the two paths agree bit-for-bit.
    pub fn minibatch_gradient(
        &self,
        w: &DenseVector,
        batch: &[(&SparseVector, f64)],
    ) -> Result<Gradient> {
        if batch.is_empty() {
            return Err(FpsError::Usage("empty mini-batch".into()));
        }
        let dim = w.len();
        let inv_n = 1.0 / batch.len() as f64;
        let support_estimate: usize = batch.iter().map(|(x, _)| x.nnz()).sum();

        if 2 * support_estimate >= dim {
            // batch support covers much of the dimension: flat accumulation
            let mut buf = DenseVector::zeros(dim);
            for &(x, y) in batch {
                let z = dot(x, w)?;
                let f = self.sample_factor(z, y) * inv_n;
                if f != 0.0 {
                    buf.axpy_sparse(f, x);
                }
            }
            if self.mu > 0.0 {
                for (i, (a, b)) in w.as_slice().iter().zip(self.anchor.as_slice()).enumerate() {
                    if a != b {
                        buf[i] += self.mu * (a - b);
                    }
                }
            }
            return Ok(Gradient::Dense(buf));
        }

        let mut acc: std::collections::HashMap<usize, f64> =
            std::collections::HashMap::with_capacity(2 * support_estimate);
        for &(x, y) in batch {
            let z = dot(x, w)?;
            let f = self.sample_factor(z, y) * inv_n;
            if f == 0.0 {
                continue;
            }
            for &(i, v) in x.entries() {
                *acc.entry(i).or_insert(0.0) += f * v;
            }
        }
        if self.mu > 0.0 {
            for (i, (a, b)) in w.as_slice().iter().zip(self.anchor.as_slice()).enumerate() {
                if a != b {
                    *acc.entry(i).or_insert(0.0) += self.mu * (a - b);
                }
            }
        }
        let mut entries: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, v)| v != 0.0).collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        if entries.len() * 4 >= dim {
            let mut out = DenseVector::zeros(dim);
            for (i, v) in entries {
                out[i] = v;
            }
            Ok(Gradient::Dense(out))
        } else {
            Ok(Gradient::Sparse(SparseVector::new(dim, entries)?))
        }
    }
}
