//! Dataset generation, sparse-file ingestion, and the four data-heterogeneity
//! partitioners.
//!
//! Synthetic regression rows have independent Gaussian coordinates whose
//! variances decay as a power law, `Var(x_j) = (j+1)^-p` (or the same law over
//! a seeded permutation of the columns); labels are `y = x . w* + 0.01 n`.
//! Heterogeneous regression scenarios draw half the rows from the ordered
//! covariance and half from the permuted one, and the partitioners stratify on
//! that population tag the way they stratify on class labels for
//! classification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FpsError, Result};
use crate::numerics::{dot, sample_gaussian, stream_id, DenseVector, RngStream, SparseVector};

const PURPOSE_WEIGHTS: u64 = 0x11;
const PURPOSE_ROW: u64 = 0x12;
const PURPOSE_PERMUTE: u64 = 0x13;
const PURPOSE_SHUFFLE: u64 = 0x14;
const PURPOSE_DIRICHLET: u64 = 0x15;

/// Learning task carried by a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
    Multiclass,
}

/// Feature rows, labels, and (for heterogeneous regression) an optional
/// per-row population tag used by the stratified partitioners.
#[derive(Clone, Debug)]
pub struct Dataset {
    rows: Vec<SparseVector>,
    labels: Vec<f64>,
    task: Task,
    dim: usize,
    groups: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(rows: Vec<SparseVector>, labels: Vec<f64>, task: Task, dim: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(FpsError::Config(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for r in &rows {
            if r.dim() != dim {
                return Err(FpsError::Config(format!(
                    "row dim {} does not match dataset dim {dim}",
                    r.dim()
                )));
            }
        }
        if task != Task::Regression {
            for &l in &labels {
                if l < 0.0 || l.fract() != 0.0 {
                    return Err(FpsError::Config(format!(
                        "class label {l} is not a nonnegative integer"
                    )));
                }
            }
        }
        Ok(Dataset { rows, labels, task, dim, groups: None })
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.rows.len() {
            return Err(FpsError::Config("group tags do not cover all rows".into()));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn groups(&self) -> Option<&[usize]> {
        self.groups.as_deref()
    }

    /// Number of classes (classification) as max label + 1.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().fold(0usize, |acc, &l| acc.max(l as usize + 1))
    }

    /// A new dataset containing the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            task: self.task,
            dim: self.dim,
            groups: self
                .groups
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i]).collect()),
        }
    }
}

/// Which power-law covariance the regression generator uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceOrder {
    /// `Var(x_j) = (j+1)^-p` in column order.
    Ordered,
    /// Same variances assigned through a seeded permutation of the columns.
    Permuted,
}

/// Synthetic regression generator description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub dim: usize,
    /// Power-law degree p > 1.
    pub power: f64,
    /// Label noise scale (0.01 in the reference setup).
    pub noise_scale: f64,
    pub covariance: CovarianceOrder,
    /// Std of the i.i.d. Gaussian ground-truth weights.
    pub weight_scale: f64,
    /// Generated coordinates with |value| below this are not stored; 0 keeps
    /// every draw. Large-dimension runs set ~1e-6 to keep rows sparse.
    pub store_epsilon: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.power <= 1.0 {
            return Err(FpsError::Config(format!(
                "power-law degree {} must exceed 1 (tail sum diverges otherwise)",
                self.power
            )));
        }
        if self.dim == 0 {
            return Err(FpsError::Config("dim must be positive".into()));
        }
        if self.noise_scale < 0.0 || self.weight_scale < 0.0 || self.store_epsilon < 0.0 {
            return Err(FpsError::Config("scales must be nonnegative".into()));
        }
        Ok(())
    }
}

fn column_stds(dim: usize, power: f64, order: CovarianceOrder, seed: u64) -> Vec<f64> {
    match order {
        CovarianceOrder::Ordered => (0..dim).map(|j| ((j + 1) as f64).powf(-power / 2.0)).collect(),
        CovarianceOrder::Permuted => {
            let mut perm: Vec<usize> = (0..dim).collect();
            let mut rng = RngStream::new(seed, stream_id(PURPOSE_PERMUTE, 0, 0));
            rng.shuffle(&mut perm);
            // column j gets the variance rank perm[j]
            (0..dim).map(|j| ((perm[j] + 1) as f64).powf(-power / 2.0)).collect()
        }
    }
}

fn ground_truth(dim: usize, scale: f64, seed: u64) -> DenseVector {
    let mut rng = RngStream::new(seed, stream_id(PURPOSE_WEIGHTS, 0, 0));
    sample_gaussian(&mut rng, dim, 0.0, scale).expect("scale validated")
}

fn synthesize_rows(
    spec: &SyntheticSpec,
    stds: &[f64],
    w_star: &DenseVector,
    row_tag: u64,
) -> (Vec<SparseVector>, Vec<f64>) {
    let out: Vec<(SparseVector, f64)> = (0..spec.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(spec.seed, stream_id(PURPOSE_ROW, row_tag, i as u64));
            let mut entries = Vec::new();
            for (j, &sd) in stds.iter().enumerate() {
                let v = rng.normal(0.0, 1.0) * sd;
                if v != 0.0 && v.abs() >= spec.store_epsilon {
                    entries.push((j, v));
                }
            }
            let row = SparseVector::new(spec.dim, entries).expect("constructed sorted");
            let label_noise = rng.normal(0.0, 1.0);
            let y = dot(&row, w_star).expect("dims match") + spec.noise_scale * label_noise;
            (row, y)
        })
        .collect();
    out.into_iter().unzip()
}

/// Power-law regression data from a single covariance; returns the dataset and
/// the ground-truth weights for loss-against-truth diagnostics.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, DenseVector)> {
    spec.validate()?;
    let stds = column_stds(spec.dim, spec.power, spec.covariance, spec.seed);
    let w_star = ground_truth(spec.dim, spec.weight_scale, spec.seed);
    let (rows, labels) = synthesize_rows(spec, &stds, &w_star, 0);
    Ok((Dataset::new(rows, labels, Task::Regression, spec.dim)?, w_star))
}

/// Two-population regression data for the heterogeneous scenarios: the first
/// half of the rows uses the ordered covariance, the second half the permuted
/// one, sharing a single ground truth. Rows carry population tags for the
/// stratified partitioners.
pub fn generate_two_population(spec: &SyntheticSpec) -> Result<(Dataset, DenseVector)> {
    spec.validate()?;
    let w_star = ground_truth(spec.dim, spec.weight_scale, spec.seed);
    let n1 = spec.samples / 2;
    let mut spec1 = spec.clone();
    spec1.samples = n1;
    let mut spec2 = spec.clone();
    spec2.samples = spec.samples - n1;

    let stds1 = column_stds(spec.dim, spec.power, CovarianceOrder::Ordered, spec.seed);
    let stds2 = column_stds(spec.dim, spec.power, CovarianceOrder::Permuted, spec.seed);
    let (mut rows, mut labels) = synthesize_rows(&spec1, &stds1, &w_star, 0);
    let (rows2, labels2) = synthesize_rows(&spec2, &stds2, &w_star, 1);
    rows.extend(rows2);
    labels.extend(labels2);
    let groups: Vec<usize> = (0..spec.samples).map(|i| usize::from(i >= n1)).collect();
    let ds = Dataset::new(rows, labels, Task::Regression, spec.dim)?.with_groups(groups)?;
    Ok((ds, w_star))
}

/// Synthetic sparse binary classification: a handful of informative features
/// with power-law-decaying true weights, plus per-row random nuisance
/// features. Stands in for large sparse click/feature-selection datasets at
/// desk scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticClassSpec {
    pub samples: usize,
    pub dim: usize,
    /// Number of informative features (placed at indices 0..informative).
    pub informative: usize,
    /// Nuisance features stored per row, drawn from the remaining indices.
    pub noise_features: usize,
    /// Magnitude of the informative true weights: `weight_scale * (j+1)^-weight_decay`.
    pub weight_scale: f64,
    pub weight_decay: f64,
    /// Std of the Gaussian perturbation added to the decision margin.
    pub margin_noise: f64,
    pub seed: u64,
}

impl SyntheticClassSpec {
    pub fn validate(&self) -> Result<()> {
        if self.informative == 0 || self.informative > self.dim {
            return Err(FpsError::Config("informative count out of range".into()));
        }
        if self.informative + self.noise_features > self.dim {
            return Err(FpsError::Config("too many features per row".into()));
        }
        if self.weight_scale <= 0.0 || self.margin_noise < 0.0 {
            return Err(FpsError::Config("bad scale parameters".into()));
        }
        Ok(())
    }
}

/// Returns the dataset and the true weight vector (zero outside the
/// informative block).
pub fn generate_synthetic_classification(
    spec: &SyntheticClassSpec,
) -> Result<(Dataset, DenseVector)> {
    spec.validate()?;
    let mut wrng = RngStream::new(spec.seed, stream_id(PURPOSE_WEIGHTS, 1, 0));
    let mut beta = DenseVector::zeros(spec.dim);
    for j in 0..spec.informative {
        let sign = if wrng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        beta[j] = sign * spec.weight_scale * ((j + 1) as f64).powf(-spec.weight_decay);
    }

    let out: Vec<(SparseVector, f64)> = (0..spec.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(spec.seed, stream_id(PURPOSE_ROW, 2, i as u64));
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(spec.informative + spec.noise_features);
            let mut margin = 0.0;
            for j in 0..spec.informative {
                let v = rng.normal(0.0, 1.0);
                if v != 0.0 {
                    entries.push((j, v));
                }
                margin += beta[j] * v;
            }
            if spec.noise_features > 0 {
                let picks =
                    rng.sample_distinct(spec.dim - spec.informative, spec.noise_features);
                for p in picks {
                    let v = rng.normal(0.0, 1.0);
                    if v != 0.0 {
                        entries.push((spec.informative + p, v));
                    }
                }
            }
            let row = SparseVector::new(spec.dim, entries).expect("sorted construction");
            let y = f64::from(margin + spec.margin_noise * rng.normal(0.0, 1.0) > 0.0);
            (row, y)
        })
        .collect();
    let (rows, labels) = out.into_iter().unzip();
    Ok((
        Dataset::new(rows, labels, Task::BinaryClassification, spec.dim)?,
        beta,
    ))
}

// ---------------------------------------------------------------------------
// libsvm text format
// ---------------------------------------------------------------------------

/// Parses the libsvm text format: one `<label> <idx>:<val> ...` record per
/// line, 1-based strictly ascending indices. Binary labels `{-1, 0}` map to 0
/// and `{+1, 1}` map to 1. `declared_dim` overrides (and must cover) the
/// maximum observed index.
pub fn parse_libsvm(path: &std::path::Path, declared_dim: Option<usize>, task: Task) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_libsvm_reader(std::io::BufReader::new(file), declared_dim, task)
}

pub fn parse_libsvm_reader(
    reader: impl std::io::BufRead,
    declared_dim: Option<usize>,
    task: Task,
) -> Result<Dataset> {
    let mut raw_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let label_tok = parts.next().expect("nonempty line has a first token");
        let raw_label: f64 = label_tok.parse().map_err(|_| FpsError::Parse {
            line: lineno,
            message: format!("bad label {label_tok:?}"),
        })?;
        let label = match task {
            Task::Regression => raw_label,
            Task::BinaryClassification => {
                if raw_label == -1.0 || raw_label == 0.0 {
                    0.0
                } else if raw_label == 1.0 {
                    1.0
                } else {
                    return Err(FpsError::Parse {
                        line: lineno,
                        message: format!("label {raw_label} is not a binary class"),
                    });
                }
            }
            Task::Multiclass => {
                if raw_label < 0.0 || raw_label.fract() != 0.0 {
                    return Err(FpsError::Parse {
                        line: lineno,
                        message: format!("label {raw_label} is not a class id"),
                    });
                }
                raw_label
            }
        };

        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut prev = 0usize; // libsvm indices are 1-based
        for tok in parts {
            let (is, vs) = tok.split_once(':').ok_or_else(|| FpsError::Parse {
                line: lineno,
                message: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = is.parse().map_err(|_| FpsError::Parse {
                line: lineno,
                message: format!("bad index {is:?}"),
            })?;
            let val: f64 = vs.parse().map_err(|_| FpsError::Parse {
                line: lineno,
                message: format!("bad value {vs:?}"),
            })?;
            if idx == 0 {
                return Err(FpsError::Parse {
                    line: lineno,
                    message: "libsvm indices are 1-based".into(),
                });
            }
            if idx <= prev {
                return Err(FpsError::Parse {
                    line: lineno,
                    message: format!("indices not ascending at {idx}"),
                });
            }
            prev = idx;
            max_index = max_index.max(idx);
            if val != 0.0 {
                entries.push((idx - 1, val));
            }
        }
        raw_rows.push(entries);
        labels.push(label);
    }

    let dim = match declared_dim {
        Some(d) => {
            if d < max_index {
                return Err(FpsError::Parse {
                    line: 0,
                    message: format!("declared dim {d} below max observed index {max_index}"),
                });
            }
            d
        }
        None => max_index,
    };
    let rows = raw_rows
        .into_iter()
        .map(|entries| SparseVector::new(dim, entries))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(rows, labels, task, dim)
}

/// Writes the dataset in libsvm format (1-based indices). Values use the
/// shortest representation that round-trips through `f64` parsing.
pub fn write_libsvm(ds: &Dataset, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..ds.len() {
        write!(out, "{}", ds.label(i))?;
        for &(j, v) in ds.row(i).entries() {
            write!(out, " {}:{}", j + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Partitioners
// ---------------------------------------------------------------------------

/// One edge device's slice of a dataset, as row indices into the parent.
#[derive(Clone, Debug)]
pub struct ClientShard {
    pub client_id: usize,
    pub indices: Vec<usize>,
}

/// The four heterogeneity scenarios: IID dealing, quantity-based label
/// imbalance, and Dirichlet label imbalance at high (`alpha = 0.1`) or mild
/// (`alpha = 1`) skew.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionSpec {
    /// Scenario number, 1..=4.
    pub scenario: u8,
    pub clients: usize,
    /// Dirichlet concentration for scenarios 3-4; defaults to 0.1 / 1.0.
    pub alpha: Option<f64>,
    /// Classes held per client in scenario 2.
    pub classes_per_client: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn effective_alpha(&self) -> f64 {
        self.alpha.unwrap_or(match self.scenario {
            3 => 0.1,
            _ => 1.0,
        })
    }
}

fn strata_of(ds: &Dataset) -> Option<Vec<usize>> {
    match ds.task() {
        Task::BinaryClassification | Task::Multiclass => {
            Some(ds.labels().iter().map(|&l| l as usize).collect())
        }
        Task::Regression => ds.groups().map(|g| g.to_vec()),
    }
}

/// Splits row indices across `spec.clients` devices. Shards are pairwise
/// disjoint and cover every row, for every scenario and seed.
pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    let m = spec.clients;
    let n = ds.len();
    if m == 0 {
        return Err(FpsError::Config("client count must be positive".into()));
    }
    if m > n {
        return Err(FpsError::Config(format!("{m} clients but only {n} rows")));
    }
    if !(1..=4).contains(&spec.scenario) {
        return Err(FpsError::Config(format!("scenario {} outside 1..=4", spec.scenario)));
    }

    let strata = strata_of(ds);
    if spec.scenario >= 2 && strata.is_none() {
        return Err(FpsError::Config(
            "scenarios 2-4 need class labels or population tags".into(),
        ));
    }

    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); m];
    match spec.scenario {
        1 => {
            // Shuffle within each stratum (one stratum when untagged), deal
            // round-robin so per-client counts differ by at most one.
            let groups = stratum_indices(n, strata.as_deref());
            for (c, mut idx) in groups.into_iter().enumerate() {
                let mut rng =
                    RngStream::new(spec.seed, stream_id(PURPOSE_SHUFFLE, c as u64, 0));
                rng.shuffle(&mut idx);
                for (pos, row) in idx.into_iter().enumerate() {
                    shards[pos % m].push(row);
                }
            }
        }
        2 => {
            let strata = strata.expect("checked above");
            let num_classes = strata.iter().copied().max().unwrap_or(0) + 1;
            let l = spec.classes_per_client;
            if l == 0 || l > num_classes {
                return Err(FpsError::Config(format!(
                    "classes_per_client {l} outside 1..={num_classes}"
                )));
            }
            if m * l < num_classes {
                return Err(FpsError::Config(format!(
                    "{m} clients x {l} classes cannot cover {num_classes} classes"
                )));
            }
            // Assign class slots round-robin: slot s of M*l slots holds class s mod C.
            let mut holders: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
            for client in 0..m {
                for slot in 0..l {
                    holders[(client * l + slot) % num_classes].push(client);
                }
            }
            let groups = stratum_indices(n, Some(&strata));
            for (c, mut idx) in groups.into_iter().enumerate() {
                let mut rng =
                    RngStream::new(spec.seed, stream_id(PURPOSE_SHUFFLE, c as u64, 0));
                rng.shuffle(&mut idx);
                let who = &holders[c];
                for (pos, row) in idx.into_iter().enumerate() {
                    shards[who[pos % who.len()]].push(row);
                }
            }
        }
        3 | 4 => {
            let strata = strata.expect("checked above");
            let alpha = spec.effective_alpha();
            if alpha <= 0.0 {
                return Err(FpsError::Config(format!("alpha {alpha} must be positive")));
            }
            let groups = stratum_indices(n, Some(&strata));
            for (c, mut idx) in groups.into_iter().enumerate() {
                let mut rng =
                    RngStream::new(spec.seed, stream_id(PURPOSE_DIRICHLET, c as u64, 0));
                let props = dirichlet(&mut rng, alpha, m);
                let counts = largest_remainder(&props, idx.len());
                let mut shuffle_rng =
                    RngStream::new(spec.seed, stream_id(PURPOSE_SHUFFLE, c as u64, 1));
                shuffle_rng.shuffle(&mut idx);
                let mut pos = 0;
                for (client, &count) in counts.iter().enumerate() {
                    shards[client].extend_from_slice(&idx[pos..pos + count]);
                    pos += count;
                }
            }
        }
        _ => unreachable!(),
    }

    Ok(shards
        .into_iter()
        .enumerate()
        .map(|(client_id, mut indices)| {
            indices.sort_unstable();
            ClientShard { client_id, indices }
        })
        .collect())
}

fn stratum_indices(n: usize, strata: Option<&[usize]>) -> Vec<Vec<usize>> {
    match strata {
        None => vec![(0..n).collect()],
        Some(tags) => {
            let classes = tags.iter().copied().max().unwrap_or(0) + 1;
            let mut out = vec![Vec::new(); classes];
            for (i, &c) in tags.iter().enumerate() {
                out[c].push(i);
            }
            out
        }
    }
}

/// Dir_M(alpha * 1) via normalized Gamma draws.
fn dirichlet(rng: &mut RngStream, alpha: f64, m: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..m).map(|_| rng.gamma(alpha).max(f64::MIN_POSITIVE)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|g| g / total).collect()
}

/// Integer allocation of `total` items by proportions, exact by construction:
/// floor everything, then hand out the remainder by largest fractional part
/// (ties to the lower client id).
fn largest_remainder(props: &[f64], total: usize) -> Vec<usize> {
    let targets: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn tiny_classification(n: usize, classes: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed, 1);
        let rows = (0..n)
            .map(|_| {
                SparseVector::new(4, vec![(0, rng.normal(0.0, 1.0).max(0.1))]).unwrap()
            })
            .collect();
        let labels = (0..n).map(|i| (i % classes) as f64).collect();
        Dataset::new(rows, labels, Task::Multiclass, 4).unwrap()
    }

    fn check_cover(shards: &[ClientShard], n: usize) {
        let mut seen = BTreeSet::new();
        for s in shards {
            for &i in &s.indices {
                assert!(seen.insert(i), "row {i} assigned twice");
            }
        }
        assert_eq!(seen.len(), n, "not all rows covered");
    }

    #[test]
    fn partition_single_client_gets_everything() {
        let ds = tiny_classification(37, 3, 5);
        for scenario in 1..=4u8 {
            let spec = PartitionSpec {
                scenario,
                clients: 1,
                alpha: None,
                classes_per_client: 3,
                seed: 9,
            };
            let shards = partition(&ds, &spec).unwrap();
            assert_eq!(shards.len(), 1);
            assert_eq!(shards[0].indices.len(), 37);
        }
    }

    #[test]
    fn partition_disjoint_cover_all_scenarios() {
        let ds = tiny_classification(400, 4, 2);
        for scenario in 1..=4u8 {
            for m in [1usize, 2, 10] {
                for seed in 0..20u64 {
                    let spec = PartitionSpec {
                        scenario,
                        clients: m,
                        alpha: None,
                        classes_per_client: if m * 2 >= 4 { 2 } else { 4 },
                        seed,
                    };
                    let shards = partition(&ds, &spec).unwrap();
                    assert_eq!(shards.len(), m);
                    check_cover(&shards, 400);
                }
            }
        }
    }

    #[test]
    fn scenario1_balance_within_one() {
        let ds = tiny_classification(600, 3, 7);
        let spec = PartitionSpec { scenario: 1, clients: 10, alpha: None, classes_per_client: 1, seed: 3 };
        let shards = partition(&ds, &spec).unwrap();
        // per-client, per-class counts differ by at most 1 from N/(M*C) = 20
        for s in &shards {
            for class in 0..3 {
                let count = s.indices.iter().filter(|&&i| ds.label(i) as usize == class).count();
                assert!((count as i64 - 20).abs() <= 1, "class {class} count {count}");
            }
        }
    }

    #[test]
    fn scenario2_binary_one_class_each() {
        let ds = tiny_classification(100, 2, 1);
        let spec = PartitionSpec { scenario: 2, clients: 2, alpha: None, classes_per_client: 1, seed: 5 };
        let shards = partition(&ds, &spec).unwrap();
        for s in &shards {
            let classes: BTreeSet<usize> =
                s.indices.iter().map(|&i| ds.label(i) as usize).collect();
            assert_eq!(classes.len(), 1);
        }
        let c0: BTreeSet<usize> = shards[0].indices.iter().map(|&i| ds.label(i) as usize).collect();
        assert_eq!(c0, BTreeSet::from([0]));
    }

    #[test]
    fn scenario2_support_bound() {
        let ds = tiny_classification(500, 5, 2);
        for m in [3usize, 5, 10] {
            let spec = PartitionSpec { scenario: 2, clients: m, alpha: None, classes_per_client: 2, seed: 11 };
            let shards = partition(&ds, &spec).unwrap();
            check_cover(&shards, 500);
            for s in &shards {
                let classes: BTreeSet<usize> =
                    s.indices.iter().map(|&i| ds.label(i) as usize).collect();
                assert!(classes.len() <= 2);
            }
        }
    }

    #[test]
    fn scenario2_impossible_cover_rejected() {
        let ds = tiny_classification(100, 5, 1);
        let spec = PartitionSpec { scenario: 2, clients: 2, alpha: None, classes_per_client: 2, seed: 0 };
        assert!(partition(&ds, &spec).is_err());
    }

    #[test]
    fn too_many_clients_rejected() {
        let ds = tiny_classification(5, 2, 1);
        let spec = PartitionSpec { scenario: 1, clients: 6, alpha: None, classes_per_client: 1, seed: 0 };
        assert!(partition(&ds, &spec).is_err());
    }

    // Dirichlet skewness: mean over classes of max client share is strictly
    // larger under alpha = 0.1 than alpha = 1, for nearly every seed.
    #[test]
    fn dirichlet_skewness_ordering() {
        let ds = tiny_classification(10_000, 10, 3);
        let mut wins = 0;
        let trials = 100;
        for seed in 0..trials {
            let mut max_share = [0.0f64; 2];
            for (slot, scenario) in [(0usize, 3u8), (1, 4)] {
                let spec = PartitionSpec {
                    scenario,
                    clients: 10,
                    alpha: None,
                    classes_per_client: 1,
                    seed,
                };
                let shards = partition(&ds, &spec).unwrap();
                let mut total = 0.0;
                for class in 0..10 {
                    let class_n = 1000.0;
                    let biggest = shards
                        .iter()
                        .map(|s| s.indices.iter().filter(|&&i| ds.label(i) as usize == class).count())
                        .max()
                        .unwrap() as f64;
                    total += biggest / class_n;
                }
                max_share[slot] = total / 10.0;
            }
            if max_share[0] > max_share[1] {
                wins += 1;
            }
        }
        assert!(wins >= 95, "alpha ordering held in only {wins}/{trials} seeds");
    }

    #[test]
    fn synthetic_variance_matches_power_law() {
        let spec = SyntheticSpec {
            samples: 100_000,
            dim: 10,
            power: 2.0,
            noise_scale: 0.0,
            covariance: CovarianceOrder::Ordered,
            weight_scale: 1.0,
            store_epsilon: 0.0,
            seed: 42,
        };
        let (ds, _) = generate_synthetic(&spec).unwrap();
        for j in [1usize, 2, 4, 8] {
            let col = j - 1;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for i in 0..ds.len() {
                let v = ds.row(i).entries().iter().find(|&&(c, _)| c == col).map_or(0.0, |&(_, v)| v);
                sum += v;
                sum_sq += v * v;
            }
            let n = ds.len() as f64;
            let var = sum_sq / n - (sum / n) * (sum / n);
            let expect = (j as f64).powf(-2.0);
            assert!(
                (var - expect).abs() <= 0.05 * expect,
                "column {j}: var {var} vs {expect}"
            );
        }
    }

    #[test]
    fn synthetic_zero_noise_zero_truth_gives_zero_labels() {
        let spec = SyntheticSpec {
            samples: 50,
            dim: 8,
            power: 3.0,
            noise_scale: 0.0,
            covariance: CovarianceOrder::Ordered,
            weight_scale: 0.0,
            store_epsilon: 0.0,
            seed: 1,
        };
        let (ds, w) = generate_synthetic(&spec).unwrap();
        assert!(w.as_slice().iter().all(|&x| x == 0.0));
        assert!(ds.labels().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn synthetic_rejects_shallow_power() {
        let spec = SyntheticSpec {
            samples: 10,
            dim: 8,
            power: 1.0,
            noise_scale: 0.01,
            covariance: CovarianceOrder::Ordered,
            weight_scale: 1.0,
            store_epsilon: 0.0,
            seed: 1,
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn two_population_tags_halves() {
        let spec = SyntheticSpec {
            samples: 101,
            dim: 16,
            power: 2.5,
            noise_scale: 0.01,
            covariance: CovarianceOrder::Ordered,
            weight_scale: 1.0,
            store_epsilon: 0.0,
            seed: 4,
        };
        let (ds, _) = generate_two_population(&spec).unwrap();
        let groups = ds.groups().unwrap();
        assert_eq!(groups.iter().filter(|&&g| g == 0).count(), 50);
        assert_eq!(groups.iter().filter(|&&g| g == 1).count(), 51);
    }

    #[test]
    fn libsvm_basic_line() {
        let input = "1 3:0.5 7:1.0\n";
        let ds = parse_libsvm_reader(input.as_bytes(), None, Task::BinaryClassification).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.label(0), 1.0);
        assert_eq!(ds.row(0).entries(), &[(2, 0.5), (6, 1.0)]);
        assert_eq!(ds.dim(), 7);
    }

    #[test]
    fn libsvm_empty_file() {
        let ds = parse_libsvm_reader("".as_bytes(), Some(5), Task::Regression).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.dim(), 5);
    }

    #[test]
    fn libsvm_negative_label_maps_to_zero() {
        let ds = parse_libsvm_reader("-1 1:2.0\n".as_bytes(), None, Task::BinaryClassification).unwrap();
        assert_eq!(ds.label(0), 0.0);
    }

    #[test]
    fn libsvm_rejects_malformed() {
        assert!(matches!(
            parse_libsvm_reader("1 3:abc\n".as_bytes(), None, Task::Regression),
            Err(FpsError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_libsvm_reader("1 5:1.0 3:2.0\n".as_bytes(), None, Task::Regression),
            Err(FpsError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_libsvm_reader("ok 1:1\n".as_bytes(), None, Task::Regression),
            Err(FpsError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn libsvm_round_trip_values_exact() {
        let spec = SyntheticSpec {
            samples: 100,
            dim: 30,
            power: 2.0,
            noise_scale: 0.01,
            covariance: CovarianceOrder::Ordered,
            weight_scale: 1.0,
            store_epsilon: 1e-3,
            seed: 17,
        };
        let (ds, _) = generate_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round_trip.svm");
        write_libsvm(&ds, &path).unwrap();
        let back = parse_libsvm(&path, Some(30), Task::Regression).unwrap();
        assert_eq!(back.len(), ds.len());
        for i in 0..ds.len() {
            assert_eq!(back.label(i), ds.label(i), "label {i}");
            assert_eq!(back.row(i).entries(), ds.row(i).entries(), "row {i}");
        }
    }

    #[test]
    fn classification_generator_shapes() {
        let spec = SyntheticClassSpec {
            samples: 200,
            dim: 1000,
            informative: 10,
            noise_features: 20,
            weight_scale: 3.0,
            weight_decay: 0.5,
            margin_noise: 0.2,
            seed: 9,
        };
        let (ds, beta) = generate_synthetic_classification(&spec).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.task(), Task::BinaryClassification);
        assert!(beta.as_slice()[10..].iter().all(|&b| b == 0.0));
        assert!(ds.labels().iter().all(|&y| y == 0.0 || y == 1.0));
        // roughly balanced by symmetry
        let ones: f64 = ds.labels().iter().sum();
        assert!(ones > 50.0 && ones < 150.0, "ones = {ones}");
        for i in 0..ds.len() {
            assert!(ds.row(i).nnz() <= 30);
        }
    }
}
