//! Measurable diagnostics: soft sparsity, power-law fits, gradient
//! dissimilarity, bias/noise probes, the learning-rate quantities rho(gamma)
//! and gamma_max, and the four-term convergence bound.

use serde::{Deserialize, Serialize};

use crate::data::{ClientShard, Dataset};
use crate::error::{FpsError, Result};
use crate::federated::Trainer;
use crate::model::{BaseLoss, ProximalObjective};
use crate::numerics::{dot, DenseVector, RngStream, SparseVector};

/// Region floor for the dissimilarity ratio: below this squared gradient norm
/// the estimate is flagged rather than trusted.
pub const DEFAULT_REGION_EPSILON: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Theory constants and formulas
// ---------------------------------------------------------------------------

/// Every constant the convergence statements consume.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Smoothness L of the application loss.
    pub smoothness: f64,
    /// Proximal coefficient mu.
    pub mu: f64,
    /// Gradient dissimilarity bound B.
    pub dissimilarity: f64,
    /// Gradient-proportional bias constant P_b in [0, 1) (0 = unbiased case).
    pub bias_scale: f64,
    /// Additive bias floor b^2.
    pub bias_floor: f64,
    /// Gradient-proportional noise constant P_n >= 0.
    pub noise_scale: f64,
    /// Additive noise floor sigma^2.
    pub noise_floor: f64,
    /// Local epochs E.
    pub local_epochs: f64,
    /// Fixed learning rate gamma.
    pub gamma: f64,
    /// Sketch width multiple c (width = c * k).
    pub width_multiple: f64,
    /// Heavy hitters k.
    pub heavy_hitters: f64,
    /// Ambient dimension d.
    pub dim: f64,
    /// Power-law degree p.
    pub power: f64,
    /// Round count T.
    pub rounds: f64,
    /// Failure probability delta.
    pub delta: f64,
    /// Iterate-norm bound W.
    pub iterate_bound: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.bias_scale) {
            return Err(FpsError::Config(format!(
                "bias constant {} outside [0, 1)",
                self.bias_scale
            )));
        }
        if self.noise_scale < 0.0 || self.bias_floor < 0.0 || self.noise_floor < 0.0 {
            return Err(FpsError::Config("bias/noise constants must be nonnegative".into()));
        }
        if self.dissimilarity < 1.0 {
            return Err(FpsError::Config(format!(
                "dissimilarity {} below 1",
                self.dissimilarity
            )));
        }
        if self.power <= 0.5 {
            return Err(FpsError::Config("power-law degree must exceed 1/2".into()));
        }
        if self.gamma <= 0.0 || self.local_epochs < 1.0 {
            return Err(FpsError::Config("gamma > 0 and E >= 1 required".into()));
        }
        Ok(())
    }

    /// H = 1 / (1 + 2 B^2 (P_b + P_n)); at most 1.
    pub fn h(&self) -> f64 {
        let b2 = self.dissimilarity * self.dissimilarity;
        1.0 / (1.0 + 2.0 * b2 * (self.bias_scale + self.noise_scale))
    }
}

/// rho(gamma) = (1 - P_b (1 + 2H) E^2 B^2) / 2
///            - gamma (2 + 2 P_b B^2 + (2(L + mu) + 1) P_n B^2)(1 + 2H) E^2.
pub fn rho(p: &TheoryParams) -> f64 {
    let h = p.h();
    let e2 = p.local_epochs * p.local_epochs;
    let b2 = p.dissimilarity * p.dissimilarity;
    let lead = (1.0 - p.bias_scale * (1.0 + 2.0 * h) * e2 * b2) / 2.0;
    let slope = (2.0 + 2.0 * p.bias_scale * b2
        + (2.0 * (p.smoothness + p.mu) + 1.0) * p.noise_scale * b2)
        * (1.0 + 2.0 * h)
        * e2;
    lead - p.gamma * slope
}

/// The fixed-rate range: gamma_max = (1 - 6 P_b E^2 B^2)
/// / (12 (1 + P_b B^2 + (L + mu + 1) P_n B^2) E^2). Errors when the numerator
/// is not positive (no admissible rate).
pub fn gamma_max(p: &TheoryParams) -> Result<f64> {
    let e2 = p.local_epochs * p.local_epochs;
    let b2 = p.dissimilarity * p.dissimilarity;
    let numerator = 1.0 - 6.0 * p.bias_scale * e2 * b2;
    if numerator <= 0.0 {
        return Err(FpsError::NoAdmissibleRate(format!(
            "1 - 6 P_b E^2 B^2 = {numerator} <= 0"
        )));
    }
    let denominator = 12.0
        * (1.0 + p.bias_scale * b2 + (p.smoothness + p.mu + 1.0) * p.noise_scale * b2)
        * e2;
    Ok(numerator / denominator)
}

/// The four-term average-gradient-norm bound, term by term.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoremBound {
    /// |f(w0) - f*| / (gamma (T + 1)).
    pub optimality_term: f64,
    /// (1/c + ((k+1)^(1-2p) - d^(1-2p)) / (2p - 1)) (L + mu)^2 W.
    pub unsketch_term: f64,
    /// 2 E^2 (1 + 2 P_b B^2 + gamma (3 + L + mu + 2 P_b B^2 + 2 P_n B^2)) b^2.
    pub bias_term: f64,
    /// 2 E^2 (1 + gamma (L + mu + 1)(3 + 2 P_b B^2 + 2 P_n B^2)) sigma^2.
    pub noise_term: f64,
    pub total: f64,
}

pub fn theorem_rhs(p: &TheoryParams, f0_gap: f64) -> TheoremBound {
    let e2 = p.local_epochs * p.local_epochs;
    let b2 = p.dissimilarity * p.dissimilarity;
    let l_mu = p.smoothness + p.mu;

    let optimality_term = f0_gap.abs() / (p.gamma * (p.rounds + 1.0));

    let tail = ((p.heavy_hitters + 1.0).powf(1.0 - 2.0 * p.power)
        - p.dim.powf(1.0 - 2.0 * p.power))
        / (2.0 * p.power - 1.0);
    let unsketch_term = (1.0 / p.width_multiple + tail) * l_mu * l_mu * p.iterate_bound;

    let bias_term = 2.0
        * e2
        * (1.0
            + 2.0 * p.bias_scale * b2
            + p.gamma * (3.0 + l_mu + 2.0 * p.bias_scale * b2 + 2.0 * p.noise_scale * b2))
        * p.bias_floor;

    let noise_term = 2.0
        * e2
        * (1.0 + p.gamma * (l_mu + 1.0) * (3.0 + 2.0 * p.bias_scale * b2 + 2.0 * p.noise_scale * b2))
        * p.noise_floor;

    TheoremBound {
        optimality_term,
        unsketch_term,
        bias_term,
        noise_term,
        total: optimality_term + unsketch_term + bias_term + noise_term,
    }
}

// ---------------------------------------------------------------------------
// Compressibility diagnostics
// ---------------------------------------------------------------------------

/// sp(x) = ||x||_1^2 / ||x||_2^2, a smooth count of significant coordinates
/// (1 for a 1-sparse vector, d for a flat one).
pub fn soft_sparsity_slice(values: &[f64]) -> Result<f64> {
    let (mut l1, mut l2sq) = (0.0, 0.0);
    for &v in values {
        l1 += v.abs();
        l2sq += v * v;
    }
    if l2sq == 0.0 {
        return Err(FpsError::UndefinedInput("soft sparsity of the zero vector".into()));
    }
    Ok(l1 * l1 / l2sq)
}

pub fn soft_sparsity_sparse(v: &SparseVector) -> Result<f64> {
    let (l1, l2) = v.norms();
    if l2 == 0.0 {
        return Err(FpsError::UndefinedInput("soft sparsity of the zero vector".into()));
    }
    Ok(l1 * l1 / (l2 * l2))
}

/// Least-squares fit of log|v_(i)| against log i over the sorted-magnitude
/// prefix. Returns the slope magnitude and the fit quality.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub r2: f64,
}

pub fn fit_power_law(values: &[f64], prefix: Option<usize>) -> Result<PowerLawFit> {
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    if mags.len() < 10 {
        return Err(FpsError::InsufficientData(format!(
            "power-law fit needs >= 10 nonzeros, got {}",
            mags.len()
        )));
    }
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let take = prefix.unwrap_or(mags.len()).min(mags.len());
    let xs: Vec<f64> = (1..=take).map(|i| (i as f64).ln()).collect();
    let ys: Vec<f64> = mags[..take].iter().map(|v| v.ln()).collect();
    let n = take as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (y - ybar);
        syy += (y - ybar) * (y - ybar);
    }
    let slope = sxy / sxx;
    let ss_res = syy - sxy * sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(PowerLawFit { exponent: -slope, r2 })
}

/// Summary of how compressible a vector is relative to a transmission budget.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CompressibilityReport {
    pub soft_sparsity: f64,
    pub fitted_power: f64,
    pub fit_r2: f64,
    /// Fraction of squared mass on the k largest-magnitude coordinates.
    pub topk_mass_fraction: f64,
    /// Set when the soft sparsity exceeds the subcarrier budget.
    pub poor_compressibility: bool,
}

pub fn compressibility_report(
    g: &DenseVector,
    k: usize,
    budget: usize,
    fit_prefix: Option<usize>,
) -> Result<CompressibilityReport> {
    let sp = soft_sparsity_slice(g.as_slice())?;
    let fit = fit_power_law(g.as_slice(), fit_prefix)?;
    let mut sq: Vec<f64> = g.as_slice().iter().map(|v| v * v).collect();
    let total: f64 = sq.iter().sum();
    sq.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let topk: f64 = sq.iter().take(k).sum();
    Ok(CompressibilityReport {
        soft_sparsity: sp,
        fitted_power: fit.exponent,
        fit_r2: fit.r2,
        topk_mass_fraction: topk / total,
        poor_compressibility: sp > budget as f64,
    })
}

// ---------------------------------------------------------------------------
// Gradient dissimilarity
// ---------------------------------------------------------------------------

/// Full-batch base-loss gradients per client (empty shards skipped).
pub fn client_full_gradients(
    train: &Dataset,
    shards: &[&ClientShard],
    base: BaseLoss,
    w: &DenseVector,
) -> Vec<DenseVector> {
    use rayon::prelude::*;
    let obj = ProximalObjective { base, mu: 0.0, anchor: DenseVector::zeros(w.len()) };
    shards
        .par_iter()
        .filter(|s| !s.indices.is_empty())
        .map(|s| {
            let batch: Vec<(&SparseVector, f64)> =
                s.indices.iter().map(|&i| (train.row(i), train.label(i))).collect();
            obj.minibatch_gradient(w, &batch).expect("nonempty batch").to_dense()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DissimilarityEstimate {
    /// sqrt(mean_m ||grad_m||^2 / ||mean_m grad_m||^2); infinite when the
    /// global gradient vanishes.
    pub value: f64,
    pub global_grad_norm_sq: f64,
    /// False when the global gradient norm is inside the epsilon floor, where
    /// the ratio is reported but not meaningful.
    pub in_region: bool,
}

pub fn estimate_dissimilarity(
    train: &Dataset,
    shards: &[&ClientShard],
    base: BaseLoss,
    w: &DenseVector,
) -> DissimilarityEstimate {
    let grads = client_full_gradients(train, shards, base, w);
    if grads.is_empty() {
        return DissimilarityEstimate { value: f64::NAN, global_grad_norm_sq: 0.0, in_region: false };
    }
    let m = grads.len() as f64;
    let mean_norm_sq: f64 = grads.iter().map(|g| g.norm_sq()).sum::<f64>() / m;
    let mut global = DenseVector::zeros(w.len());
    for g in &grads {
        global.axpy(1.0 / m, g);
    }
    let den = global.norm_sq();
    let value = if den == 0.0 { f64::INFINITY } else { (mean_norm_sq / den).sqrt() };
    DissimilarityEstimate {
        value,
        global_grad_norm_sq: den,
        in_region: den > DEFAULT_REGION_EPSILON,
    }
}

// ---------------------------------------------------------------------------
// Bias / noise replica probes
// ---------------------------------------------------------------------------

/// Replica-probe decomposition of the received update at a point `w`:
/// the systematic deviation from the true full-batch gradient and the
/// spread of the replicas around their mean.
#[derive(Clone, Debug)]
pub struct BiasNoiseEstimate {
    pub bias: DenseVector,
    pub bias_norm_sq: f64,
    pub noise_power: f64,
    pub replicas: usize,
    /// The rescale applied to round deltas: gamma times nominal local steps.
    pub scale: f64,
}

/// Runs `replicas` independent single rounds from `w` and compares the
/// implied gradient estimates against the exact full-batch gradient.
pub fn estimate_bias_noise(
    trainer: &mut Trainer,
    w: &DenseVector,
    replicas: usize,
) -> Result<BiasNoiseEstimate> {
    if replicas < 2 {
        return Err(FpsError::Usage("need at least 2 replicas".into()));
    }
    let gamma = trainer.config().learning_rate;
    let scale = gamma * trainer.nominal_steps_per_round() as f64;
    let dim = w.len();

    let mut estimates: Vec<DenseVector> = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut delta = trainer.probe_round_delta(w, r)?;
        for x in delta.as_mut_slice() {
            *x /= -scale;
        }
        estimates.push(delta);
    }

    let mut mean = DenseVector::zeros(dim);
    for e in &estimates {
        mean.axpy(1.0 / replicas as f64, e);
    }
    let mut noise_power = 0.0;
    for e in &estimates {
        let mut diff = e.clone();
        diff.axpy(-1.0, &mean);
        noise_power += diff.norm_sq();
    }
    noise_power /= replicas as f64;

    let base = trainer_base(trainer);
    let grads = client_full_gradients(trainer.train_set(), &trainer.shards(), base, w);
    let mut full = DenseVector::zeros(dim);
    let m = grads.len().max(1) as f64;
    for g in &grads {
        full.axpy(1.0 / m, g);
    }
    let mut bias = mean;
    bias.axpy(-1.0, &full);
    let bias_norm_sq = bias.norm_sq();
    Ok(BiasNoiseEstimate { bias, bias_norm_sq, noise_power, replicas, scale })
}

fn trainer_base(trainer: &Trainer) -> BaseLoss {
    match trainer.train_set().task() {
        crate::data::Task::Regression => BaseLoss::SquaredError,
        _ => BaseLoss::Logistic,
    }
}

// ---------------------------------------------------------------------------
// Smoothness estimation
// ---------------------------------------------------------------------------

/// lambda_max of (1/n) X^T X by power iteration; the squared-error smoothness
/// estimate (divide by 4 for the logistic loss).
pub fn estimate_smoothness(rows: &[&SparseVector], dim: usize, iterations: usize) -> f64 {
    if rows.is_empty() || dim == 0 {
        return 0.0;
    }
    let n = rows.len() as f64;
    let mut rng = RngStream::new(0x5eed, 0x51);
    let mut v = crate::numerics::sample_gaussian(&mut rng, dim, 0.0, 1.0).expect("positive std");
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let mut next = DenseVector::zeros(dim);
        for r in rows {
            let z = dot(r, &v).expect("dims agree") / n;
            next.axpy_sparse(z, r);
        }
        let norm = next.norm_sq().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.norm_sq().sqrt();
        for x in next.as_mut_slice() {
            *x /= norm;
        }
        v = next;
    }
    lambda
}

// ---------------------------------------------------------------------------
// Per-round metrics
// ---------------------------------------------------------------------------

/// One communication round's record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub algorithm: String,
    pub scenario: u8,
    pub test_loss: f64,
    pub log_test_loss: f64,
    /// NaN for regression tasks.
    pub accuracy: f64,
    pub w_norm_sq: f64,
    pub soft_sparsity_w: f64,
    pub b_estimate: f64,
    /// Reals put on the air per sender this round.
    pub reals_transmitted: u64,
    /// Soft sparsity of this round's aggregate model change (not in the CSV).
    pub soft_sparsity_update: f64,
    /// Whether a budget-exempt sender exceeded the subcarrier budget.
    pub budget_exceeded: bool,
}

/// Mean test loss and (for classification) accuracy of a model. The decision
/// rule maps a nonnegative margin to class 1.
pub fn evaluate_model(base: BaseLoss, w: &DenseVector, test: &Dataset) -> (f64, f64) {
    if test.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for i in 0..test.len() {
        let x = test.row(i);
        let y = test.label(i);
        let z = dot(x, w).expect("dims agree");
        total += match base {
            BaseLoss::SquaredError => 0.5 * (z - y) * (z - y),
            BaseLoss::Logistic => {
                if z >= 0.0 {
                    correct += usize::from(y == 1.0);
                } else {
                    correct += usize::from(y == 0.0);
                }
                let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                softplus - y * z
            }
        };
    }
    let loss = total / test.len() as f64;
    let accuracy = match base {
        BaseLoss::SquaredError => f64::NAN,
        BaseLoss::Logistic => correct as f64 / test.len() as f64,
    };
    (loss, accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, CovarianceOrder, PartitionSpec, SyntheticSpec, Task};
    use crate::federated::{
        Algorithm, EpochMode, FederatedConfig, IteratePolicy, SketchReset, SlotSelection,
    };

    fn params() -> TheoryParams {
        TheoryParams {
            smoothness: 1.0,
            mu: 0.0,
            dissimilarity: 1.0,
            bias_scale: 0.0,
            bias_floor: 0.0,
            noise_scale: 0.0,
            noise_floor: 0.0,
            local_epochs: 1.0,
            gamma: 0.01,
            width_multiple: 4.0,
            heavy_hitters: 50.0,
            dim: 1e4,
            power: 2.0,
            rounds: 100.0,
            delta: 0.05,
            iterate_bound: 1.0,
        }
    }

    #[test]
    fn rho_limit_and_exact_point() {
        let mut p = params();
        p.gamma = 1e-300;
        assert!((rho(&p) - 0.5).abs() < 1e-12);
        p.gamma = 1.0 / 24.0;
        assert!((rho(&p) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gamma_max_unbiased_case() {
        let p = params();
        assert!((gamma_max(&p).unwrap() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_max_monotonicities() {
        // E^2 scaling is exact in the unbiased case.
        let mut p = params();
        p.noise_scale = 0.2;
        let g1 = gamma_max(&p).unwrap();
        p.local_epochs = 2.0;
        let g2 = gamma_max(&p).unwrap();
        assert!((g2 * 4.0 - g1).abs() < 1e-15 * g1.abs().max(1.0));

        // with bias present the bound strictly shrinks in E and in B
        p.local_epochs = 1.0;
        p.bias_scale = 0.02;
        let g3 = gamma_max(&p).unwrap();
        p.local_epochs = 2.0;
        assert!(gamma_max(&p).unwrap() < g3);
        p.local_epochs = 1.0;
        p.dissimilarity = 2.0;
        assert!(gamma_max(&p).unwrap() < g3);
    }

    #[test]
    fn gamma_max_no_admissible_rate() {
        let mut p = params();
        p.bias_scale = 0.5;
        p.local_epochs = 2.0; // 6 * 0.5 * 4 = 12 > 1
        assert!(matches!(gamma_max(&p), Err(FpsError::NoAdmissibleRate(_))));
    }

    #[test]
    fn gamma_at_bound_keeps_rho_nonnegative() {
        // The provable guarantee at gamma = gamma_max is rho >= 0 (the bound
        // is derived from rho > 0 and touches it in the unbiased corner).
        let mut rng = RngStream::new(31, 0);
        for _ in 0..5000 {
            let mut p = params();
            p.local_epochs = (1 + (rng.next_index(5))) as f64;
            p.dissimilarity = 1.0 + 2.0 * rng.next_f64();
            p.smoothness = 5.0 * rng.next_f64();
            p.mu = [0.0, 0.01, 0.1, 1.0][rng.next_index(4)];
            let cap = 1.0 / (6.0 * p.local_epochs * p.local_epochs * p.dissimilarity * p.dissimilarity);
            p.bias_scale = rng.next_f64() * cap.min(1.0) * 0.999;
            p.noise_scale = 2.0 * rng.next_f64();
            if let Ok(g) = gamma_max(&p) {
                p.gamma = g;
                assert!(rho(&p) >= -1e-12, "rho {} at {:?}", rho(&p), p);
            }
        }
    }

    #[test]
    fn theorem_terms_behave() {
        let mut p = params();
        p.bias_floor = 0.5;
        p.noise_floor = 1.0;
        let b = theorem_rhs(&p, 2.0);
        assert!(b.optimality_term > 0.0 && b.unsketch_term > 0.0);
        assert!(b.bias_term > 0.0 && b.noise_term > 0.0);
        let total = b.optimality_term + b.unsketch_term + b.bias_term + b.noise_term;
        assert!((b.total - total).abs() < 1e-15);

        // doubling T shrinks only the first term
        p.rounds = 201.0;
        let b2 = theorem_rhs(&p, 2.0);
        assert!(b2.optimality_term < b.optimality_term);
        assert_eq!(b2.unsketch_term, b.unsketch_term);
        assert_eq!(b2.bias_term, b.bias_term);
        assert_eq!(b2.noise_term, b.noise_term);

        // the residual term shrinks in c and p
        let mut pc = params();
        pc.width_multiple = 8.0;
        assert!(theorem_rhs(&pc, 2.0).unsketch_term < theorem_rhs(&params(), 2.0).unsketch_term);
        let mut pp = params();
        pp.power = 3.0;
        assert!(theorem_rhs(&pp, 2.0).unsketch_term < theorem_rhs(&params(), 2.0).unsketch_term);
    }

    #[test]
    fn theorem_residual_reference_value() {
        // c = 4, k = 200, p = 5, huge d, (L + mu)^2 W = 1: the tail term is
        // numerically negligible and the residual is 1/4.
        let mut p = params();
        p.width_multiple = 4.0;
        p.heavy_hitters = 200.0;
        p.power = 5.0;
        p.dim = 54_686_452.0;
        p.smoothness = 1.0;
        p.mu = 0.0;
        p.iterate_bound = 1.0;
        let b = theorem_rhs(&p, 0.0);
        assert!((b.unsketch_term - 0.25).abs() < 1e-12, "{}", b.unsketch_term);
    }

    #[test]
    fn theorem_limit_all_residuals_vanish() {
        let mut p = params();
        p.width_multiple = 1e18;
        p.heavy_hitters = p.dim;
        let b = theorem_rhs(&p, 3.0);
        let t1 = 3.0 / (p.gamma * (p.rounds + 1.0));
        assert!((b.total - t1).abs() <= 1e-9 * t1);
    }

    #[test]
    fn soft_sparsity_reference_values() {
        assert!((soft_sparsity_slice(&[1.0; 16]).unwrap() - 16.0).abs() < 1e-12);
        assert!((soft_sparsity_slice(&[0.0, 0.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((soft_sparsity_slice(&[3.0, 4.0]).unwrap() - 1.96).abs() < 1e-12);
        assert!(soft_sparsity_slice(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn soft_sparsity_bounds_hold() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..200 {
            let d = 1 + rng.next_index(64);
            let v: Vec<f64> = (0..d).map(|_| rng.normal(0.0, 1.0)).collect();
            if v.iter().all(|&x| x == 0.0) {
                continue;
            }
            let sp = soft_sparsity_slice(&v).unwrap();
            assert!(sp >= 1.0 - 1e-12 && sp <= d as f64 + 1e-9);
        }
    }

    #[test]
    fn power_law_fit_exact_recovery() {
        let v: Vec<f64> = (1..=200).map(|i| (i as f64).powf(-3.0)).collect();
        let fit = fit_power_law(&v, None).unwrap();
        assert!((fit.exponent - 3.0).abs() < 1e-6, "{}", fit.exponent);
        assert!(fit.r2 > 0.9999);
    }

    #[test]
    fn power_law_fit_constant_is_flat() {
        let fit = fit_power_law(&[2.5; 64], None).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
    }

    #[test]
    fn power_law_fit_needs_support() {
        assert!(matches!(
            fit_power_law(&[1.0, 2.0, 3.0], None),
            Err(FpsError::InsufficientData(_))
        ));
    }

    #[test]
    fn dense_gaussian_vector_flagged_poorly_compressible() {
        // E|x| = sqrt(2/pi) sigma, so sp concentrates near d * 2/pi.
        let mut rng = RngStream::new(12, 0);
        let d = 4000;
        let g = crate::numerics::sample_gaussian(&mut rng, d, 0.0, 1.0).unwrap();
        let report = compressibility_report(&g, 50, 256, Some(1000)).unwrap();
        let expect = d as f64 * 2.0 / std::f64::consts::PI;
        assert!((report.soft_sparsity - expect).abs() < 0.06 * expect);
        assert!(report.poor_compressibility);
    }

    fn toy_dataset_and_config(mu: f64, sigma: f64) -> (Dataset, FederatedConfig) {
        let spec = SyntheticSpec {
            samples: 80,
            dim: 24,
            power: 3.0,
            noise_scale: 0.0,
            covariance: CovarianceOrder::Ordered,
            weight_scale: 1.0,
            store_epsilon: 0.0,
            seed: 5,
        };
        let (ds, _) = generate_synthetic(&spec).unwrap();
        let cfg = FederatedConfig {
            algorithm: Algorithm::FedProx,
            clients: 4,
            local_epochs: 1,
            learning_rate: 0.25,
            mu,
            subcarriers: 24,
            heavy_hitters: 24,
            rounds: 1,
            batch_size: 1000, // full shard
            sketch_rows: 2,
            sketch_cols: None,
            sketch_hash_seed: None,
            noise_std: sigma,
            downlink_noise_std: 0.0,
            eval_fraction: 0.0,
            iterate_norm_cap: None,
            partition: PartitionSpec {
                scenario: 1,
                clients: 4,
                alpha: None,
                classes_per_client: 1,
                seed: 2,
            },
            iterate_policy: IteratePolicy::DenseLocal,
            sketch_reset: SketchReset::Continuous,
            slot_selection: SlotSelection::Shared,
            epoch_mode: EpochMode::Epochs,
            seed: 77,
        };
        (ds, cfg)
    }

    #[test]
    fn dissimilarity_identical_shards_is_one() {
        // four clients, identical rows => identical full-batch gradients
        let dim = 6;
        let row = SparseVector::new(dim, vec![(0, 1.0), (3, -0.5)]).unwrap();
        let rows = vec![row; 8];
        let labels = vec![1.0; 8];
        let ds = Dataset::new(rows, labels, Task::Regression, dim).unwrap();
        let shards: Vec<ClientShard> = (0..4)
            .map(|c| ClientShard { client_id: c, indices: vec![2 * c, 2 * c + 1] })
            .collect();
        let refs: Vec<&ClientShard> = shards.iter().collect();
        let w = DenseVector::zeros(dim);
        let est = estimate_dissimilarity(&ds, &refs, BaseLoss::SquaredError, &w);
        assert!((est.value - 1.0).abs() < 1e-12);
        assert!(est.in_region);
    }

    #[test]
    fn dissimilarity_opposite_gradients_flagged() {
        let dim = 2;
        let rows = vec![
            SparseVector::new(dim, vec![(0, 1.0)]).unwrap(),
            SparseVector::new(dim, vec![(0, 1.0)]).unwrap(),
        ];
        // labels +1 and -1 at w = 0 give gradients -e0 and +e0
        let ds = Dataset::new(rows, vec![1.0, -1.0], Task::Regression, dim).unwrap();
        let shards = [
            ClientShard { client_id: 0, indices: vec![0] },
            ClientShard { client_id: 1, indices: vec![1] },
        ];
        let refs: Vec<&ClientShard> = shards.iter().collect();
        let est = estimate_dissimilarity(&ds, &refs, BaseLoss::SquaredError, &DenseVector::zeros(dim));
        assert!(!est.in_region);
        assert!(est.value.is_infinite());
    }

    #[test]
    fn bias_noise_probe_exact_case_is_zero() {
        // sigma = 0, full batch, E = 1, full-vector transmission, dyadic
        // learning rate: the received update is exactly -gamma grad f.
        let (ds, cfg) = toy_dataset_and_config(0.0, 0.0);
        let mut tr = Trainer::new(cfg, &ds).unwrap();
        let w = DenseVector::zeros(24);
        let est = estimate_bias_noise(&mut tr, &w, 8).unwrap();
        // replicas are bit-identical; the residual is the mean accumulator's
        // own rounding (~ulp^2)
        assert!(est.noise_power < 1e-28, "{}", est.noise_power);
        assert!(est.bias_norm_sq < 1e-24, "{}", est.bias_norm_sq);
    }

    #[test]
    fn bias_noise_probe_pure_noise_power() {
        // Zero true gradient (labels all zero, w = 0): the replica spread is
        // channel noise alone, power d * sigma^2 / (gamma E)^2.
        let dim = 24;
        let rows: Vec<SparseVector> =
            (0..40).map(|i| SparseVector::new(dim, vec![(i % dim, 1.0)]).unwrap()).collect();
        let ds = Dataset::new(rows, vec![0.0; 40], Task::Regression, dim).unwrap();
        let (_, mut cfg) = toy_dataset_and_config(0.0, 1.0);
        cfg.noise_std = 1.0;
        let mut tr = Trainer::new(cfg.clone(), &ds).unwrap();
        let est = estimate_bias_noise(&mut tr, &DenseVector::zeros(dim), 200).unwrap();
        let expect = dim as f64 * 1.0 / (cfg.learning_rate * 1.0).powi(2);
        assert!(
            (est.noise_power - expect).abs() < 0.10 * expect,
            "{} vs {expect}",
            est.noise_power
        );
    }

    #[test]
    fn bias_shrinks_with_wider_sketch() {
        let spec = SyntheticSpec {
            samples: 120,
            dim: 256,
            power: 3.0,
            noise_scale: 0.0,
            covariance: CovarianceOrder::Ordered,
            weight_scale: 1.0,
            store_epsilon: 0.0,
            seed: 9,
        };
        let (ds, _) = generate_synthetic(&spec).unwrap();
        let mut norms = Vec::new();
        for cols in [32usize, 128] {
            let cfg = FederatedConfig {
                algorithm: Algorithm::Fps,
                clients: 4,
                local_epochs: 1,
                learning_rate: 0.25,
                mu: 0.0,
                subcarriers: 5 * cols,
                heavy_hitters: 8,
                rounds: 1,
                batch_size: 1000,
                sketch_rows: 5,
                sketch_cols: Some(cols),
                sketch_hash_seed: Some(42),
                noise_std: 0.0,
                downlink_noise_std: 0.0,
                eval_fraction: 0.0,
                iterate_norm_cap: None,
                partition: PartitionSpec {
                    scenario: 1,
                    clients: 4,
                    alpha: None,
                    classes_per_client: 1,
                    seed: 2,
                },
                iterate_policy: IteratePolicy::DenseLocal,
                sketch_reset: SketchReset::Continuous,
                slot_selection: SlotSelection::Shared,
                epoch_mode: EpochMode::Epochs,
                seed: 13,
            };
            let mut tr = Trainer::new(cfg, &ds).unwrap();
            // probe at a nonzero point so compression error is visible
            let mut w = DenseVector::zeros(256);
            for j in 0..16 {
                w[j] = ((j + 1) as f64).powf(-1.0);
            }
            let est = estimate_bias_noise(&mut tr, &w, 20).unwrap();
            norms.push(est.bias_norm_sq);
        }
        assert!(
            norms[1] < norms[0],
            "wider sketch did not shrink the bias: {norms:?}"
        );
    }

    #[test]
    fn smoothness_estimate_matches_diagonal_case() {
        // rows = scaled basis vectors: (1/n) X^T X is diagonal with known max.
        let dim = 6;
        let rows: Vec<SparseVector> = (0..dim)
            .map(|j| SparseVector::new(dim, vec![(j, (j + 1) as f64)]).unwrap())
            .collect();
        let refs: Vec<&SparseVector> = rows.iter().collect();
        let lambda = estimate_smoothness(&refs, dim, 300);
        let expect = 36.0 / dim as f64;
        assert!((lambda - expect).abs() < 1e-9 * expect.max(1.0), "{lambda} vs {expect}");
    }

    #[test]
    fn evaluate_zero_model_balanced_accuracy() {
        // zero margins predict class 1 everywhere: accuracy = share of ones
        let dim = 4;
        let rows: Vec<SparseVector> =
            (0..10).map(|i| SparseVector::new(dim, vec![(i % dim, 1.0)]).unwrap()).collect();
        let labels: Vec<f64> = (0..10).map(|i| f64::from(i % 2 == 0)).collect();
        let ds = Dataset::new(rows, labels, Task::BinaryClassification, dim).unwrap();
        let (loss, acc) = evaluate_model(BaseLoss::Logistic, &DenseVector::zeros(dim), &ds);
        assert!((acc - 0.5).abs() < 1e-12);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn evaluate_perfect_separation() {
        let dim = 2;
        let rows: Vec<SparseVector> = (0..8)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                SparseVector::new(dim, vec![(0, sign)]).unwrap()
            })
            .collect();
        let labels: Vec<f64> = (0..8).map(|i| f64::from(i % 2 == 0)).collect();
        let ds = Dataset::new(rows, labels, Task::BinaryClassification, dim).unwrap();
        let mut w = DenseVector::zeros(dim);
        w[0] = 50.0;
        let (_, acc) = evaluate_model(BaseLoss::Logistic, &w, &ds);
        assert_eq!(acc, 1.0);
    }

    // Residual of top-k extraction stays under the analytical envelope
    // (1/c + ((k+1)^(1-2p) - d^(1-2p))/(2p-1)) ||w||^2 on power-law vectors.
    #[test]
    fn unsketch_residual_within_envelope() {
        use crate::sketch::{CountSketch, SketchShape};
        let d = 2000;
        let p = 3.0;
        let k = 40;
        let c = 4;
        let bound = 1.0 / c as f64
            + ((k as f64 + 1.0).powf(1.0 - 2.0 * p) - (d as f64).powf(1.0 - 2.0 * p))
                / (2.0 * p - 1.0);
        let mut rng = RngStream::new(3, 1);
        let entries: Vec<(usize, f64)> = (0..d)
            .map(|i| {
                let s = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                (i, s * ((i + 1) as f64).powf(-p))
            })
            .collect();
        let v = SparseVector::new(d, entries).unwrap();
        let norm_sq = v.norm_sq();
        let mut ok = 0;
        let trials = 60;
        for seed in 0..trials {
            let shape = SketchShape::new(7, c * k, d, seed).unwrap();
            let mut s = CountSketch::new(shape).unwrap();
            s.accumulate(&v, 1.0).unwrap();
            let hh = s.unsketch_topk(k).unwrap();
            let mut resid = v.to_dense();
            resid.axpy_sparse(-1.0, &hh.entries);
            if resid.norm_sq() <= bound * norm_sq {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * trials as f64, "{ok}/{trials} within bound");
    }
}
