//! The bandlimited noisy multiple-access channel.
//!
//! One use of the channel carries at most `K` reals per sender. Over-the-air
//! superposition yields the average of the senders' payloads at the receiver,
//! and i.i.d. `N(0, sigma^2)` perturbs each received real once (the noise is
//! applied to the aggregate). Noise streams are keyed by `(seed, round)` so
//! runs replay exactly and algorithms can share common random numbers.

use serde::{Deserialize, Serialize};

use crate::error::{FpsError, Result};
use crate::numerics::{stream_id, DenseVector, RngStream};
use crate::sketch::{merge_scaled, CountSketch};

const PURPOSE_UPLINK: u64 = 0x21;
pub(crate) const PURPOSE_DOWNLINK: u64 = 0x22;

/// Channel description: subcarrier budget, uplink noise, and (off by default)
/// downlink broadcast noise.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Reals a sender may place on the air per round.
    pub subcarriers: usize,
    pub noise_std: f64,
    /// Server-to-client broadcast noise; 0 models a clean downlink.
    pub downlink_noise_std: f64,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subcarriers == 0 {
            return Err(FpsError::Config("subcarriers must be positive".into()));
        }
        if self.noise_std < 0.0 {
            return Err(FpsError::Config(format!(
                "noise_std {} must be nonnegative",
                self.noise_std
            )));
        }
        if self.downlink_noise_std < 0.0 {
            return Err(FpsError::Config(format!(
                "downlink_noise_std {} must be nonnegative",
                self.downlink_noise_std
            )));
        }
        Ok(())
    }
}

/// What one round of transmission put on the air.
#[derive(Clone, Copy, Debug)]
pub struct TransmitReport {
    /// Reals transmitted per sender this round.
    pub reals_per_sender: usize,
    pub senders: usize,
    /// Set instead of erroring for budget-exempt senders.
    pub over_budget: bool,
}

/// Over-the-air aggregation of same-shape sketches: the cell-wise average of
/// the senders' tables plus one `N(0, sigma^2)` draw per cell.
pub fn transmit_sketches(
    sketches: &[&CountSketch],
    spec: &ChannelSpec,
    round: usize,
) -> Result<(CountSketch, TransmitReport)> {
    if sketches.is_empty() {
        return Err(FpsError::Channel("no senders".into()));
    }
    let shape = *sketches[0].shape();
    for s in sketches {
        if *s.shape() != shape {
            return Err(FpsError::Channel("sketch shapes differ across senders".into()));
        }
    }
    if shape.cells() > spec.subcarriers {
        return Err(FpsError::Channel(format!(
            "sketch needs {} subcarriers but only {} available",
            shape.cells(),
            spec.subcarriers
        )));
    }
    let m = sketches.len() as f64;
    let weights = vec![1.0 / m; sketches.len()];
    let mut received = merge_scaled(sketches, &weights)?;
    if spec.noise_std > 0.0 {
        let mut rng = RngStream::new(spec.seed, stream_id(PURPOSE_UPLINK, 0, round as u64));
        for cell in received.cells_mut() {
            *cell += rng.normal(0.0, spec.noise_std);
        }
    }
    Ok((
        received,
        TransmitReport {
            reals_per_sender: shape.cells(),
            senders: sketches.len(),
            over_budget: false,
        },
    ))
}

/// Over-the-air aggregation of coordinate payloads on an explicit slot list.
///
/// Every slot is on the air whether or not a sender's value there is zero, so
/// each receives one noise draw. Untransmitted coordinates are exactly zero at
/// the receiver (the caller applies the returned per-slot values). When
/// `enforce_budget` is set, more than `K` slots is an error; budget-exempt
/// senders get the report flagged instead.
pub fn transmit_coordinates(
    updates: &[&DenseVector],
    slots: &[usize],
    spec: &ChannelSpec,
    round: usize,
) -> Result<(Vec<f64>, TransmitReport)> {
    transmit_coordinates_inner(updates, slots, spec, round, true)
}

/// Budget-exempt variant for full-vector baselines.
pub fn transmit_coordinates_unbounded(
    updates: &[&DenseVector],
    slots: &[usize],
    spec: &ChannelSpec,
    round: usize,
) -> Result<(Vec<f64>, TransmitReport)> {
    transmit_coordinates_inner(updates, slots, spec, round, false)
}

fn transmit_coordinates_inner(
    updates: &[&DenseVector],
    slots: &[usize],
    spec: &ChannelSpec,
    round: usize,
    enforce_budget: bool,
) -> Result<(Vec<f64>, TransmitReport)> {
    if updates.is_empty() {
        return Err(FpsError::Channel("no senders".into()));
    }
    let dim = updates[0].len();
    for u in updates {
        if u.len() != dim {
            return Err(FpsError::Channel("payload dimensions differ".into()));
        }
    }
    let over_budget = slots.len() > spec.subcarriers;
    if over_budget && enforce_budget {
        return Err(FpsError::Channel(format!(
            "{} coordinate slots exceed the {}-subcarrier budget",
            slots.len(),
            spec.subcarriers
        )));
    }
    let mut prev: Option<usize> = None;
    for &s in slots {
        if s >= dim {
            return Err(FpsError::Channel(format!("slot {s} out of range for dim {dim}")));
        }
        if let Some(p) = prev {
            if s <= p {
                return Err(FpsError::Channel("slots must be strictly ascending".into()));
            }
        }
        prev = Some(s);
    }

    let m = updates.len() as f64;
    let mut rng = RngStream::new(spec.seed, stream_id(PURPOSE_UPLINK, 1, round as u64));
    let values = slots
        .iter()
        .map(|&s| {
            let mean: f64 = updates.iter().map(|u| u[s]).sum::<f64>() / m;
            if spec.noise_std > 0.0 {
                mean + rng.normal(0.0, spec.noise_std)
            } else {
                mean
            }
        })
        .collect();
    Ok((
        values,
        TransmitReport {
            reals_per_sender: slots.len(),
            senders: updates.len(),
            over_budget,
        },
    ))
}
