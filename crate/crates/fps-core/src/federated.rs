//! The training protocols: federated proximal sketching and its baselines
//! (FetchSGD-style error-feedback sketching, bandlimited coordinate descent,
//! idealized global top-k, and full-vector FedProx), plus the round
//! orchestrator.
//!
//! Client work within a round runs in parallel; every random decision is
//! keyed by `(seed, purpose, client, round)` and aggregation folds results in
//! client order, so outputs are bit-identical regardless of thread count.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate_model, soft_sparsity_slice, RoundMetrics};
use crate::channel::{
    transmit_coordinates, transmit_coordinates_unbounded, transmit_sketches, ChannelSpec,
    PURPOSE_DOWNLINK,
};
use crate::data::{partition, ClientShard, Dataset, PartitionSpec, Task};
use crate::error::{FpsError, Result};
use crate::model::{BaseLoss, Gradient, ModelState, ProximalObjective};
use crate::numerics::{stream_id, DenseVector, RngStream, SparseVector};
use crate::sketch::{CountSketch, SketchShape};

const PURPOSE_SPLIT: u64 = 0x31;
const PURPOSE_BATCH: u64 = 0x32;
const PURPOSE_COORD_SELECT: u64 = 0x33;
const PURPOSE_HASH: u64 = 0x34;

/// Which protocol runs the rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "fps")]
    Fps,
    #[serde(rename = "fetchsgd")]
    FetchSgd,
    #[serde(rename = "blcd")]
    Blcd,
    #[serde(rename = "topk")]
    TopK,
    #[serde(rename = "fedprox")]
    FedProx,
}

impl Algorithm {
    pub fn uses_sketch(self) -> bool {
        matches!(self, Algorithm::Fps | Algorithm::FetchSgd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fps => "fps",
            Algorithm::FetchSgd => "fetchsgd",
            Algorithm::Blcd => "blcd",
            Algorithm::TopK => "topk",
            Algorithm::FedProx => "fedprox",
        }
    }
}

/// What the client's dense local iterate is between communications.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IteratePolicy {
    /// Gradients are evaluated at a dense local iterate advanced by plain
    /// proximal SGD while the same updates accumulate into the sketch.
    #[default]
    DenseLocal,
    /// The local iterate is re-extracted from the local sketch after every
    /// step (the single-device recursive-sketching behavior).
    MissionResketch,
}

/// What happens to a client's sketch when the broadcast arrives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchReset {
    /// Keep accumulating into the same sketch across rounds. The carrier then
    /// holds only true local updates; channel noise touches each round's
    /// received copy and never feeds back into the sketch. This is the
    /// protocol's step-2 initialization taken literally, and it is the stable
    /// choice.
    #[default]
    Continuous,
    /// Replace the sketch with a fresh sketch of the broadcast model each
    /// round. Re-sketching the extracted model folds extraction error back
    /// into the carrier; with k near the column count this feedback loop
    /// diverges, so this mode exists for comparison rather than use.
    Resync,
}

/// How coordinate slots are drawn for random sparsification.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotSelection {
    /// The server draws one slot set per round, shared by all clients.
    #[default]
    Shared,
    /// Each client draws its own slot set.
    PerClient,
}

/// Whether `local_epochs` counts passes over the shard or individual steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochMode {
    #[default]
    Epochs,
    Steps,
}

/// Full experiment description for one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FederatedConfig {
    pub algorithm: Algorithm,
    pub clients: usize,
    /// Local epochs (or steps, per `epoch_mode`) between communications.
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub mu: f64,
    /// Subcarrier budget K: reals per sender per round.
    pub subcarriers: usize,
    /// Heavy hitters extracted by the sketch algorithms and the top-k oracle.
    pub heavy_hitters: usize,
    pub rounds: usize,
    pub batch_size: usize,
    /// Sketch row count; columns default to `subcarriers / sketch_rows`.
    pub sketch_rows: usize,
    /// Explicit column override (an exactness escape hatch for tests).
    pub sketch_cols: Option<usize>,
    /// Explicit hash seed override; otherwise derived from `seed`.
    pub sketch_hash_seed: Option<u64>,
    pub noise_std: f64,
    pub downlink_noise_std: f64,
    /// Held-out fraction for the per-round evaluation split.
    pub eval_fraction: f64,
    /// Optional cap on the broadcast model's squared norm; when set, the
    /// server projects onto the ball after every round. Off by default: the
    /// iterate bound is normally a measured diagnostic, not a constraint.
    pub iterate_norm_cap: Option<f64>,
    pub partition: PartitionSpec,
    pub iterate_policy: IteratePolicy,
    pub sketch_reset: SketchReset,
    pub slot_selection: SlotSelection,
    pub epoch_mode: EpochMode,
    pub seed: u64,
}

impl FederatedConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.clients == 0 {
            return Err(FpsError::Config("clients must be >= 1 [clients]".into()));
        }
        if self.local_epochs == 0 {
            return Err(FpsError::Config("local_epochs must be >= 1 [local_epochs]".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(FpsError::Config(format!(
                "learning_rate {} must be positive [learning_rate]",
                self.learning_rate
            )));
        }
        if self.mu < 0.0 {
            return Err(FpsError::Config(format!("mu {} must be >= 0 [mu]", self.mu)));
        }
        if self.batch_size == 0 {
            return Err(FpsError::Config("batch_size must be >= 1 [batch_size]".into()));
        }
        if self.heavy_hitters == 0 || self.heavy_hitters > dim {
            return Err(FpsError::Config(format!(
                "heavy_hitters {} outside 1..={dim} [heavy_hitters]",
                self.heavy_hitters
            )));
        }
        if self.algorithm.uses_sketch() {
            if self.sketch_rows == 0 {
                return Err(FpsError::Config("sketch_rows must be >= 1 [sketch_rows]".into()));
            }
            if self.heavy_hitters > self.subcarriers {
                return Err(FpsError::Config(format!(
                    "heavy_hitters {} exceeds the subcarrier budget {} [heavy_hitters]",
                    self.heavy_hitters, self.subcarriers
                )));
            }
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(FpsError::Config(format!(
                "eval_fraction {} outside [0, 1) [eval_fraction]",
                self.eval_fraction
            )));
        }
        self.channel_spec().validate()?;
        Ok(())
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        ChannelSpec {
            subcarriers: self.subcarriers,
            noise_std: self.noise_std,
            downlink_noise_std: self.downlink_noise_std,
            seed: self.seed,
        }
    }

    /// Sketch geometry: columns default to `floor(K / rows)`.
    pub fn sketch_shape(&self, dim: usize) -> Result<SketchShape> {
        let cols = match self.sketch_cols {
            Some(c) => c,
            None => self.subcarriers / self.sketch_rows,
        };
        if cols == 0 {
            return Err(FpsError::Config(format!(
                "subcarrier budget {} cannot fit {} sketch rows [subcarriers]",
                self.subcarriers, self.sketch_rows
            )));
        }
        let hash_seed = self.sketch_hash_seed.unwrap_or_else(|| {
            RngStream::new(self.seed, stream_id(PURPOSE_HASH, 0, 0)).next_u64()
        });
        SketchShape::new(self.sketch_rows, cols, dim, hash_seed)
    }
}

/// One edge device's state between rounds.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    pub shard: ClientShard,
    pub model: ModelState,
    /// The last broadcast; the proximal term anchors to this.
    pub anchor: DenseVector,
    pub sketch: Option<CountSketch>,
}

/// Server-side state.
#[derive(Clone, Debug)]
pub struct ServerState {
    pub model: ModelState,
    /// Error-accumulation sketch (error-feedback baseline only).
    pub error_sketch: Option<CountSketch>,
}

/// Orchestrates `rounds` rounds of the configured protocol over a dataset.
pub struct Trainer {
    cfg: FederatedConfig,
    base: BaseLoss,
    train: Dataset,
    test: Dataset,
    server: ServerState,
    clients: Vec<ClientState>,
    /// Per-sender reals and budget flag from the latest round.
    last_report: (usize, bool),
}

/// Indices of the k largest-magnitude coordinates of the average update
/// (ties to the lower index), ascending. The oracle step of the idealized
/// top-k baseline: the top-k of the average, not the average of per-client
/// top-k sets.
pub fn top_indices_of_average(updates: &[DenseVector], k: usize) -> Vec<usize> {
    assert!(!updates.is_empty());
    let dim = updates[0].len();
    let m = updates.len() as f64;
    let mut avg = vec![0.0f64; dim];
    for u in updates {
        for (a, v) in avg.iter_mut().zip(u.as_slice()) {
            *a += v;
        }
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        let fa = (avg[a] / m).abs();
        let fb = (avg[b] / m).abs();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = order.into_iter().take(k.min(dim)).collect();
    picked.sort_unstable();
    picked
}

impl Trainer {
    pub fn new(cfg: FederatedConfig, ds: &Dataset) -> Result<Self> {
        cfg.validate(ds.dim())?;
        let base = match ds.task() {
            Task::Regression => BaseLoss::SquaredError,
            Task::BinaryClassification => BaseLoss::Logistic,
            Task::Multiclass => {
                return Err(FpsError::Config(
                    "multiclass training is not supported; use binary labels".into(),
                ))
            }
        };

        // Seeded shuffle, held-out tail for evaluation.
        let n = ds.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut split_rng = RngStream::new(cfg.seed, stream_id(PURPOSE_SPLIT, 0, 0));
        split_rng.shuffle(&mut order);
        let test_n = ((n as f64) * cfg.eval_fraction).round() as usize;
        let train_n = n - test_n;
        let train = ds.subset(&order[..train_n]);
        let test = ds.subset(&order[train_n..]);

        let shards = partition(&train, &cfg.partition)?;
        let dim = ds.dim();
        let shape = if cfg.algorithm.uses_sketch() {
            let shape = cfg.sketch_shape(dim)?;
            if shape.cells() > cfg.subcarriers {
                return Err(FpsError::Config(format!(
                    "sketch {}x{} needs {} subcarriers but K = {} [subcarriers]",
                    shape.rows,
                    shape.cols,
                    shape.cells(),
                    cfg.subcarriers
                )));
            }
            Some(shape)
        } else {
            None
        };

        let clients = shards
            .into_iter()
            .map(|shard| -> Result<ClientState> {
                Ok(ClientState {
                    id: shard.client_id,
                    shard,
                    model: ModelState::zeros(dim),
                    anchor: DenseVector::zeros(dim),
                    // A sketch of the zero initial model is the zero table.
                    sketch: shape.map(CountSketch::new).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let server = ServerState {
            model: ModelState::zeros(dim),
            error_sketch: if cfg.algorithm == Algorithm::FetchSgd {
                shape.map(CountSketch::new).transpose()?
            } else {
                None
            },
        };

        Ok(Trainer { cfg, base, train, test, server, clients, last_report: (0, false) })
    }

    pub fn config(&self) -> &FederatedConfig {
        &self.cfg
    }

    pub fn server_model(&self) -> &DenseVector {
        &self.server.model.weights
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn shards(&self) -> Vec<&ClientShard> {
        self.clients.iter().map(|c| &c.shard).collect()
    }

    /// Nominal local SGD steps per round (epochs x batches per epoch, using
    /// the mean shard size).
    pub fn nominal_steps_per_round(&self) -> usize {
        let mean_shard = self.train.len() / self.cfg.clients.max(1);
        let per_epoch = if self.cfg.batch_size >= mean_shard {
            1
        } else {
            mean_shard / self.cfg.batch_size
        };
        match self.cfg.epoch_mode {
            EpochMode::Epochs => self.cfg.local_epochs * per_epoch.max(1),
            EpochMode::Steps => self.cfg.local_epochs,
        }
    }

    /// Runs all configured rounds and returns the per-round metric series.
    pub fn run(&mut self) -> Result<Vec<RoundMetrics>> {
        let mut out = Vec::with_capacity(self.cfg.rounds);
        for t in 0..self.cfg.rounds {
            out.push(self.step_round(t)?);
        }
        Ok(out)
    }

    /// Executes round `t` and returns its metrics.
    pub fn step_round(&mut self, t: usize) -> Result<RoundMetrics> {
        let before = self.server.model.weights.clone();
        match self.cfg.algorithm {
            Algorithm::Fps => self.fps_round(t)?,
            Algorithm::FetchSgd => self.fetchsgd_round(t)?,
            Algorithm::Blcd => self.blcd_round(t)?,
            Algorithm::TopK => self.topk_round(t)?,
            Algorithm::FedProx => self.fedprox_round(t)?,
        }
        self.broadcast(t)?;
        Ok(self.collect_metrics(t, &before))
    }

    /// Resets every model to `w0` (anchors included, error sketch zeroed,
    /// client sketches re-seeded with `w0`) so a single round can be replayed
    /// under fresh randomness. Used by the bias/noise replica probes.
    pub fn reset_to(&mut self, w0: &DenseVector) -> Result<()> {
        self.server.model.weights = w0.clone();
        if let Some(es) = &mut self.server.error_sketch {
            es.zero();
        }
        let w0_sparse = SparseVector::from_dense(w0);
        for c in &mut self.clients {
            c.model.weights = w0.clone();
            c.anchor = w0.clone();
            if let Some(sk) = &mut c.sketch {
                sk.zero();
                if self.cfg.algorithm == Algorithm::Fps {
                    sk.accumulate(&w0_sparse, 1.0)?;
                }
            }
        }
        Ok(())
    }

    /// The server-model displacement produced by one round from `w0`, under
    /// the randomness of round index `round`.
    pub fn probe_round_delta(&mut self, w0: &DenseVector, round: usize) -> Result<DenseVector> {
        self.reset_to(w0)?;
        match self.cfg.algorithm {
            Algorithm::Fps => self.fps_round(round)?,
            Algorithm::FetchSgd => self.fetchsgd_round(round)?,
            Algorithm::Blcd => self.blcd_round(round)?,
            Algorithm::TopK => self.topk_round(round)?,
            Algorithm::FedProx => self.fedprox_round(round)?,
        }
        let mut delta = self.server.model.weights.clone();
        delta.axpy(-1.0, w0);
        Ok(delta)
    }

    // -- local work ---------------------------------------------------------

    /// Runs the local steps for one client. `sketch_updates` folds `-gamma g`
    /// into the client sketch as it goes.
    fn local_pass(
        cfg: &FederatedConfig,
        base: BaseLoss,
        train: &Dataset,
        client: &mut ClientState,
        round: usize,
        sketch_updates: bool,
    ) -> Result<()> {
        let n = client.shard.indices.len();
        if n == 0 {
            return Ok(());
        }
        let gamma = cfg.learning_rate;
        let obj = ProximalObjective { base, mu: cfg.mu, anchor: client.anchor.clone() };
        let mut rng = RngStream::new(
            cfg.seed,
            stream_id(PURPOSE_BATCH, client.id as u64, round as u64),
        );
        let mut order = client.shard.indices.clone();
        let eff_batch = cfg.batch_size.min(n);

        let step = |indices: &[usize], client: &mut ClientState| -> Result<()> {
            let batch: Vec<(&SparseVector, f64)> = indices
                .iter()
                .map(|&i| (train.row(i), train.label(i)))
                .collect();
            let g = obj.minibatch_gradient(&client.model.weights, &batch)?;
            if sketch_updates {
                let sk = client.sketch.as_mut().expect("sketch algorithms carry a sketch");
                match &g {
                    Gradient::Sparse(s) => sk.accumulate(s, -gamma)?,
                    Gradient::Dense(d) => sk.accumulate_dense(d, -gamma)?,
                }
            }
            g.apply_to(&mut client.model.weights, -gamma);
            if cfg.iterate_policy == IteratePolicy::MissionResketch && sketch_updates {
                let sk = client.sketch.as_ref().expect("checked above");
                client.model.weights = sk.unsketch_topk(cfg.heavy_hitters)?.entries.to_dense();
            }
            Ok(())
        };

        // A batch covering the whole shard makes sampling degenerate; keep
        // the canonical row order so full-batch runs are shuffle-free.
        let full_batch = eff_batch == n;
        match cfg.epoch_mode {
            EpochMode::Epochs => {
                let steps_per_epoch = if full_batch { 1 } else { n / eff_batch };
                for _ in 0..cfg.local_epochs {
                    if !full_batch {
                        rng.shuffle(&mut order);
                    }
                    for s in 0..steps_per_epoch {
                        let chunk = &order[s * eff_batch..(s + 1) * eff_batch].to_vec();
                        step(chunk, client)?;
                    }
                }
            }
            EpochMode::Steps => {
                let mut pos = n; // force an initial shuffle
                for _ in 0..cfg.local_epochs {
                    if pos + eff_batch > n {
                        if !full_batch {
                            rng.shuffle(&mut order);
                        }
                        pos = 0;
                    }
                    let chunk = order[pos..pos + eff_batch].to_vec();
                    pos += eff_batch;
                    step(&chunk, client)?;
                }
            }
        }
        Ok(())
    }

    fn parallel_local_pass(&mut self, round: usize, sketch_updates: bool) -> Result<()> {
        let cfg = &self.cfg;
        let base = self.base;
        let train = &self.train;
        self.clients
            .par_iter_mut()
            .try_for_each(|c| Self::local_pass(cfg, base, train, c, round, sketch_updates))
    }

    /// Accumulated local updates `w_local - anchor`, in client order.
    fn client_updates(&self) -> Vec<DenseVector> {
        self.clients
            .iter()
            .map(|c| {
                let mut u = c.model.weights.clone();
                u.axpy(-1.0, &c.anchor);
                u
            })
            .collect()
    }

    // -- the five protocols -------------------------------------------------

    fn fps_round(&mut self, t: usize) -> Result<()> {
        if self.cfg.sketch_reset == SketchReset::Resync {
            // Fresh sketch of the current broadcast before local work.
            let w = SparseVector::from_dense(&self.server.model.weights);
            for c in &mut self.clients {
                let sk = c.sketch.as_mut().expect("fps carries sketches");
                sk.zero();
                sk.accumulate(&w, 1.0)?;
            }
        }
        self.parallel_local_pass(t, true)?;
        let sketches: Vec<&CountSketch> =
            self.clients.iter().map(|c| c.sketch.as_ref().expect("fps")).collect();
        let (received, report) = transmit_sketches(&sketches, &self.cfg.channel_spec(), t)?;
        let hh = received.unsketch_topk(self.cfg.heavy_hitters)?;
        self.server.model.weights = hh.entries.to_dense();
        self.last_report = (report.reals_per_sender, report.over_budget);
        Ok(())
    }

    fn fetchsgd_round(&mut self, t: usize) -> Result<()> {
        // The carrier holds only this round's updates.
        for c in &mut self.clients {
            c.sketch.as_mut().expect("fetchsgd carries sketches").zero();
        }
        self.parallel_local_pass(t, true)?;
        let sketches: Vec<&CountSketch> =
            self.clients.iter().map(|c| c.sketch.as_ref().expect("fetchsgd")).collect();
        let (received, report) = transmit_sketches(&sketches, &self.cfg.channel_spec(), t)?;
        let error_sketch = self.server.error_sketch.as_mut().expect("fetchsgd server state");
        error_sketch.add_scaled(&received, 1.0)?;
        let delta = error_sketch.unsketch_topk(self.cfg.heavy_hitters)?;
        error_sketch.accumulate(&delta.entries, -1.0)?;
        // Updates already carry -gamma, so the extracted delta applies as-is.
        self.server.model.weights.axpy_sparse(1.0, &delta.entries);
        self.last_report = (report.reals_per_sender, report.over_budget);
        Ok(())
    }

    fn blcd_round(&mut self, t: usize) -> Result<()> {
        self.parallel_local_pass(t, false)?;
        let updates = self.client_updates();
        let dim = self.train.dim();
        let budget = self.cfg.subcarriers.min(dim);
        match self.cfg.slot_selection {
            SlotSelection::Shared => {
                let mut rng = RngStream::new(
                    self.cfg.seed,
                    stream_id(PURPOSE_COORD_SELECT, 0, t as u64),
                );
                let slots = rng.sample_distinct(dim, budget);
                let refs: Vec<&DenseVector> = updates.iter().collect();
                let (values, report) =
                    transmit_coordinates(&refs, &slots, &self.cfg.channel_spec(), t)?;
                for (&s, v) in slots.iter().zip(values) {
                    self.server.model.weights[s] += v;
                }
                self.last_report = (report.reals_per_sender, report.over_budget);
            }
            SlotSelection::PerClient => {
                // Each sender restricts its payload to its own draw; the
                // receiver sees the per-slot superposition over all senders
                // divided by M, plus one noise draw per active slot.
                let m = updates.len() as f64;
                let mut sums: std::collections::BTreeMap<usize, f64> = Default::default();
                for (c, u) in updates.iter().enumerate() {
                    let mut rng = RngStream::new(
                        self.cfg.seed,
                        stream_id(PURPOSE_COORD_SELECT, (c + 1) as u64, t as u64),
                    );
                    for s in rng.sample_distinct(dim, budget) {
                        *sums.entry(s).or_insert(0.0) += u[s];
                    }
                }
                let spec = self.cfg.channel_spec();
                let mut noise = RngStream::new(
                    spec.seed,
                    stream_id(PURPOSE_COORD_SELECT, 0xffff, t as u64),
                );
                for (s, total) in sums {
                    let mut v = total / m;
                    if spec.noise_std > 0.0 {
                        v += noise.normal(0.0, spec.noise_std);
                    }
                    self.server.model.weights[s] += v;
                }
                self.last_report = (budget, false);
            }
        }
        Ok(())
    }

    fn topk_round(&mut self, t: usize) -> Result<()> {
        self.parallel_local_pass(t, false)?;
        let updates = self.client_updates();
        // Idealized consensus: the exact noiseless average picks the slots.
        let k = self.cfg.heavy_hitters.min(self.cfg.subcarriers);
        let slots = top_indices_of_average(&updates, k);
        let refs: Vec<&DenseVector> = updates.iter().collect();
        let (values, report) = transmit_coordinates(&refs, &slots, &self.cfg.channel_spec(), t)?;
        for (&s, v) in slots.iter().zip(values) {
            self.server.model.weights[s] += v;
        }
        self.last_report = (report.reals_per_sender, report.over_budget);
        Ok(())
    }

    fn fedprox_round(&mut self, t: usize) -> Result<()> {
        self.parallel_local_pass(t, false)?;
        let updates = self.client_updates();
        let dim = self.train.dim();
        // The entire update vector goes on the air (budget-exempt baseline).
        let slots: Vec<usize> = (0..dim).collect();
        let refs: Vec<&DenseVector> = updates.iter().collect();
        let (values, report) =
            transmit_coordinates_unbounded(&refs, &slots, &self.cfg.channel_spec(), t)?;
        for (s, v) in values.into_iter().enumerate() {
            self.server.model.weights[s] += v;
        }
        self.last_report = (report.reals_per_sender, report.over_budget);
        Ok(())
    }

    /// Server-to-client broadcast: anchors and local models take the new
    /// global model (optionally through a noisy downlink).
    fn broadcast(&mut self, t: usize) -> Result<()> {
        if let Some(cap) = self.cfg.iterate_norm_cap {
            let norm_sq = self.server.model.weights.norm_sq();
            if norm_sq > cap {
                let scale = (cap / norm_sq).sqrt();
                for x in self.server.model.weights.as_mut_slice() {
                    *x *= scale;
                }
            }
        }
        let w = &self.server.model.weights;
        let sigma_d = self.cfg.downlink_noise_std;
        for c in &mut self.clients {
            let received = if sigma_d > 0.0 {
                let mut rng = RngStream::new(
                    self.cfg.seed,
                    stream_id(PURPOSE_DOWNLINK, c.id as u64, t as u64),
                );
                let mut noisy = w.clone();
                for x in noisy.as_mut_slice() {
                    *x += rng.normal(0.0, sigma_d);
                }
                noisy
            } else {
                w.clone()
            };
            c.model.weights = received.clone();
            c.anchor = received;
        }
        Ok(())
    }

    fn collect_metrics(&self, t: usize, before: &DenseVector) -> RoundMetrics {
        let w = &self.server.model.weights;
        let (test_loss, accuracy) = evaluate_model(self.base, w, &self.test);
        let mut update = w.clone();
        update.axpy(-1.0, before);
        let b_est = crate::analysis::estimate_dissimilarity(
            &self.train,
            &self.shards(),
            self.base,
            w,
        );
        RoundMetrics {
            round: t,
            algorithm: self.cfg.algorithm.name().to_string(),
            scenario: self.cfg.partition.scenario,
            test_loss,
            log_test_loss: test_loss.ln(),
            accuracy,
            w_norm_sq: w.norm_sq(),
            soft_sparsity_w: soft_sparsity_slice(w.as_slice()).unwrap_or(f64::NAN),
            b_estimate: b_est.value,
            reals_transmitted: self.last_report.0 as u64,
            soft_sparsity_update: soft_sparsity_slice(update.as_slice()).unwrap_or(f64::NAN),
            budget_exceeded: self.last_report.1,
        }
    }
}

/// Convenience wrapper: partitions, trains for all rounds, returns metrics.
pub fn run_experiment(cfg: &FederatedConfig, ds: &Dataset) -> Result<Vec<RoundMetrics>> {
    Trainer::new(cfg.clone(), ds)?.run()
}
