//! The experiment file: a JSON document describing one experiment (dataset,
//! partitioning, protocol, channel, seeds). Unknown keys are rejected and
//! every constraint is checked before any compute, with errors naming the
//! offending field path.

use serde::{Deserialize, Serialize};

use fps_core::data::{
    generate_synthetic, generate_synthetic_classification, generate_two_population, parse_libsvm,
    CovarianceOrder, Dataset, PartitionSpec, SyntheticClassSpec, SyntheticSpec, Task,
};
use fps_core::federated::{
    Algorithm, EpochMode, FederatedConfig, IteratePolicy, SketchReset, SlotSelection,
};
use fps_core::{FpsError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_sketch_rows() -> usize {
    5
}
fn default_eval_fraction() -> f64 {
    0.2
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_classes_per_client() -> usize {
    1
}
fn default_noise_scale() -> f64 {
    0.01
}
fn default_weight_scale() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_margin_noise() -> f64 {
    0.1
}
fn default_mu_grid() -> Vec<f64> {
    vec![0.0, 0.01, 0.1, 1.0]
}
fn default_scenarios() -> Vec<u8> {
    vec![1, 2, 3, 4]
}
fn default_diag_rounds() -> usize {
    200
}
fn default_checkpoints() -> Vec<usize> {
    vec![25, 75, 150]
}
fn default_curve_points() -> usize {
    1000
}
fn default_probe_rounds() -> usize {
    4
}
fn default_probe_replicas() -> usize {
    30
}
fn default_delta() -> f64 {
    0.05
}

/// Synthetic regression dataset description (see the core generator).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionFile {
    pub samples: usize,
    pub dim: usize,
    pub power: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    /// Draw half the rows from the permuted covariance (needed by the
    /// heterogeneous regression scenarios).
    #[serde(default)]
    pub two_population: bool,
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
    #[serde(default)]
    pub store_epsilon: f64,
    /// Fixed data seed; null derives one from the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationFile {
    pub samples: usize,
    pub dim: usize,
    pub informative: usize,
    pub noise_features: usize,
    #[serde(default = "default_one")]
    pub weight_scale: f64,
    #[serde(default = "default_one")]
    pub weight_decay: f64,
    #[serde(default = "default_margin_noise")]
    pub margin_noise: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibsvmFile {
    pub path: String,
    #[serde(default)]
    pub dim: Option<usize>,
    pub task: Task,
}

/// Dataset manifest: exactly one source.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetFile {
    SyntheticRegression(RegressionFile),
    SyntheticClassification(ClassificationFile),
    Libsvm(LibsvmFile),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionFile {
    pub scenario: u8,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_classes_per_client")]
    pub classes_per_client: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub noise_std: f64,
    #[serde(default)]
    pub downlink_noise_std: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsFile {
    #[serde(default)]
    pub iterate_policy: IteratePolicy,
    #[serde(default)]
    pub sketch_reset: SketchReset,
    #[serde(default)]
    pub slot_selection: SlotSelection,
    #[serde(default)]
    pub epoch_mode: EpochMode,
    /// Explicit sketch column override (defaults to subcarriers / rows).
    #[serde(default)]
    pub sketch_cols: Option<usize>,
    #[serde(default)]
    pub sketch_hash_seed: Option<u64>,
    /// Project the broadcast model onto a squared-norm ball. Off by default;
    /// the iterate bound is normally measured, not enforced.
    #[serde(default)]
    pub iterate_norm_cap: Option<f64>,
}

/// Explicit theory constants; anything left null is estimated or defaulted.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryFile {
    #[serde(default)]
    pub smoothness: Option<f64>,
    #[serde(default)]
    pub dissimilarity: Option<f64>,
    #[serde(default)]
    pub bias_scale: Option<f64>,
    #[serde(default)]
    pub bias_floor: Option<f64>,
    #[serde(default)]
    pub noise_scale: Option<f64>,
    #[serde(default)]
    pub noise_floor: Option<f64>,
    #[serde(default)]
    pub iterate_bound: Option<f64>,
    #[serde(default)]
    pub f0_gap: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Power-law degree override for the bound's tail term.
    #[serde(default)]
    pub power: Option<f64>,
    /// Rounds of the probe trajectory used when fitting bias/noise constants.
    #[serde(default = "default_probe_rounds")]
    pub probe_rounds: usize,
    #[serde(default = "default_probe_replicas")]
    pub probe_replicas: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default = "default_mu_grid")]
    pub mu_grid: Vec<f64>,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<u8>,
}

impl Default for SweepFile {
    fn default() -> Self {
        SweepFile { mu_grid: default_mu_grid(), scenarios: default_scenarios() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseFile {
    #[serde(default = "default_diag_rounds")]
    pub rounds: usize,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<usize>,
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

impl Default for DiagnoseFile {
    fn default() -> Self {
        DiagnoseFile {
            rounds: default_diag_rounds(),
            checkpoints: default_checkpoints(),
            curve_points: default_curve_points(),
        }
    }
}

/// The whole experiment file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub dataset: DatasetFile,
    pub partition: PartitionFile,
    pub clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub mu: f64,
    pub subcarriers: usize,
    pub heavy_hitters: usize,
    #[serde(default = "default_sketch_rows")]
    pub sketch_rows: usize,
    pub channel: ChannelFile,
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
    #[serde(default)]
    pub options: OptionsFile,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub theory: Option<TheoryFile>,
    #[serde(default)]
    pub sweep: Option<SweepFile>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseFile>,
}

impl ExperimentFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ExperimentFile = serde_json::from_str(&text)
            .map_err(|e| FpsError::Config(format!("config schema: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, msg: String| -> Result<()> {
            Err(FpsError::Config(format!("{path}: {msg}")))
        };
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return fail(
                "schema_version",
                format!("expected {CONFIG_SCHEMA_VERSION}, got {}", self.schema_version),
            );
        }
        if self.channel.noise_std < 0.0 {
            return fail("channel.noise_std", "must be nonnegative".to_string());
        }
        if self.channel.downlink_noise_std < 0.0 {
            return fail("channel.downlink_noise_std", "must be nonnegative".to_string());
        }
        if self.clients == 0 {
            return fail("clients", "must be at least 1".to_string());
        }
        if self.local_epochs == 0 {
            return fail("local_epochs", "must be at least 1".to_string());
        }
        if self.learning_rate <= 0.0 {
            return fail("learning_rate", "must be positive".to_string());
        }
        if self.mu < 0.0 {
            return fail("mu", "must be nonnegative".to_string());
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1".to_string());
        }
        if self.subcarriers == 0 {
            return fail("subcarriers", "must be at least 1".to_string());
        }
        if self.heavy_hitters == 0 {
            return fail("heavy_hitters", "must be at least 1".to_string());
        }
        if self.sketch_rows == 0 {
            return fail("sketch_rows", "must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return fail("eval_fraction", "must lie in [0, 1)".to_string());
        }
        if !(1..=4).contains(&self.partition.scenario) {
            return fail("partition.scenario", "must be 1..=4".to_string());
        }
        if let Some(a) = self.partition.alpha {
            if a <= 0.0 {
                return fail("partition.alpha", "must be positive".to_string());
            }
        }
        if self.partition.classes_per_client == 0 {
            return fail("partition.classes_per_client", "must be at least 1".to_string());
        }
        if self.seeds.is_empty() {
            return fail("seeds", "at least one seed required".to_string());
        }
        match &self.dataset {
            DatasetFile::SyntheticRegression(r) => {
                if r.power <= 1.0 {
                    return fail("dataset.synthetic_regression.power", "must exceed 1".to_string());
                }
                if r.samples == 0 || r.dim == 0 {
                    return fail(
                        "dataset.synthetic_regression.samples",
                        "samples and dim must be positive".to_string(),
                    );
                }
                if self.partition.scenario >= 2 && !r.two_population {
                    return fail(
                        "dataset.synthetic_regression.two_population",
                        "scenarios 2-4 need the two-population regression data".to_string(),
                    );
                }
            }
            DatasetFile::SyntheticClassification(c) => {
                if c.informative == 0 || c.informative > c.dim {
                    return fail(
                        "dataset.synthetic_classification.informative",
                        "must lie in 1..=dim".to_string(),
                    );
                }
                if c.informative + c.noise_features > c.dim {
                    return fail(
                        "dataset.synthetic_classification.noise_features",
                        "informative + noise_features must fit in dim".to_string(),
                    );
                }
            }
            DatasetFile::Libsvm(l) => {
                if l.path.is_empty() {
                    return fail("dataset.libsvm.path", "must not be empty".to_string());
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.mu_grid.is_empty() || sweep.scenarios.is_empty() {
                return fail("sweep", "mu_grid and scenarios must be nonempty".to_string());
            }
            for &s in &sweep.scenarios {
                if !(1..=4).contains(&s) {
                    return fail("sweep.scenarios", format!("scenario {s} outside 1..=4"));
                }
            }
            for &m in &sweep.mu_grid {
                if m < 0.0 {
                    return fail("sweep.mu_grid", format!("mu {m} negative"));
                }
            }
        }
        if let Some(d) = &self.diagnose {
            if d.curve_points == 0 {
                return fail("diagnose.curve_points", "must be at least 1".to_string());
            }
        }
        Ok(())
    }

    /// Materializes the dataset for a run seed. Synthetic sources without a
    /// pinned seed draw a fresh dataset per replica.
    pub fn build_dataset(&self, run_seed: u64) -> Result<(Dataset, Option<fps_core::DenseVector>)> {
        match &self.dataset {
            DatasetFile::SyntheticRegression(r) => {
                let spec = SyntheticSpec {
                    samples: r.samples,
                    dim: r.dim,
                    power: r.power,
                    noise_scale: r.noise_scale,
                    covariance: CovarianceOrder::Ordered,
                    weight_scale: r.weight_scale,
                    store_epsilon: r.store_epsilon,
                    seed: r.seed.unwrap_or(run_seed.wrapping_mul(0x9e37).wrapping_add(17)),
                };
                let (ds, w) = if r.two_population {
                    generate_two_population(&spec)?
                } else {
                    generate_synthetic(&spec)?
                };
                Ok((ds, Some(w)))
            }
            DatasetFile::SyntheticClassification(c) => {
                let spec = SyntheticClassSpec {
                    samples: c.samples,
                    dim: c.dim,
                    informative: c.informative,
                    noise_features: c.noise_features,
                    weight_scale: c.weight_scale,
                    weight_decay: c.weight_decay,
                    margin_noise: c.margin_noise,
                    seed: c.seed.unwrap_or(run_seed.wrapping_mul(0x9e37).wrapping_add(23)),
                };
                let (ds, w) = generate_synthetic_classification(&spec)?;
                Ok((ds, Some(w)))
            }
            DatasetFile::Libsvm(l) => {
                let ds = parse_libsvm(std::path::Path::new(&l.path), l.dim, l.task)?;
                Ok((ds, None))
            }
        }
    }

    /// The core run configuration for a given seed (and optional mu /
    /// scenario overrides from a sweep cell).
    pub fn federated_config(
        &self,
        run_seed: u64,
        mu: Option<f64>,
        scenario: Option<u8>,
    ) -> FederatedConfig {
        FederatedConfig {
            algorithm: self.algorithm,
            clients: self.clients,
            local_epochs: self.local_epochs,
            learning_rate: self.learning_rate,
            mu: mu.unwrap_or(self.mu),
            subcarriers: self.subcarriers,
            heavy_hitters: self.heavy_hitters,
            rounds: self.rounds,
            batch_size: self.batch_size,
            sketch_rows: self.sketch_rows,
            sketch_cols: self.options.sketch_cols,
            sketch_hash_seed: self.options.sketch_hash_seed,
            noise_std: self.channel.noise_std,
            downlink_noise_std: self.channel.downlink_noise_std,
            eval_fraction: self.eval_fraction,
            iterate_norm_cap: self.options.iterate_norm_cap,
            partition: PartitionSpec {
                scenario: scenario.unwrap_or(self.partition.scenario),
                clients: self.clients,
                alpha: self.partition.alpha,
                classes_per_client: self.partition.classes_per_client,
                seed: self.partition.seed.unwrap_or(run_seed),
            },
            iterate_policy: self.options.iterate_policy,
            sketch_reset: self.options.sketch_reset,
            slot_selection: self.options.slot_selection,
            epoch_mode: self.options.epoch_mode,
            seed: run_seed,
        }
    }
}

/// A minimal valid experiment document, shared by unit tests.
#[cfg(test)]
pub(crate) fn minimal_json() -> serde_json::Value {
    serde_json::json!({
        "algorithm": "fps",
        "dataset": {"synthetic_regression": {"samples": 100, "dim": 64, "power": 3.0}},
        "partition": {"scenario": 1},
        "clients": 2,
        "rounds": 2,
        "local_epochs": 1,
        "batch_size": 10,
        "learning_rate": 0.01,
        "subcarriers": 64,
        "heavy_hitters": 8,
        "channel": {"noise_std": 0.0}
    })
}
