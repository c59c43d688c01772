//! A simulation laboratory for communication-efficient federated learning
//! over noisy, bandlimited wireless multiple-access channels.
//!
//! The crate implements federated proximal sketching - clients fold gradient
//! updates into count-sketch carriers, the channel superposes and perturbs
//! them, and the server extracts the top-k heavy hitters as the next k-sparse
//! model - together with its baselines (error-feedback sketching, bandlimited
//! coordinate descent, an idealized global top-k, and full-vector FedProx),
//! the heterogeneity partitioners, and the computable convergence
//! diagnostics.

pub mod analysis;
pub mod channel;
pub mod data;
pub mod error;
pub mod federated;
pub mod model;
pub mod numerics;
pub mod report;
pub mod sketch;

pub use analysis::{RoundMetrics, TheoremBound, TheoryParams};
pub use data::{ClientShard, Dataset, PartitionSpec, SyntheticSpec, Task};
pub use error::{FpsError, Result};
pub use federated::{Algorithm, FederatedConfig, Trainer};
pub use model::{BaseLoss, ModelState, ProximalObjective};
pub use numerics::{DenseVector, RngStream, SparseVector};
pub use sketch::{CountSketch, HeavyHitters, SketchShape};
