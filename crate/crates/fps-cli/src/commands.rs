//! The four subcommands: run, sweep, bounds, diagnose.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use fps_core::analysis::{
    self, client_full_gradients, estimate_bias_noise, estimate_smoothness, fit_power_law,
    gamma_max, rho, soft_sparsity_slice, theorem_rhs, RoundMetrics, TheoryParams,
};
use fps_core::data::{Dataset, Task};
use fps_core::federated::{Algorithm, FederatedConfig, Trainer};
use fps_core::model::BaseLoss;
use fps_core::numerics::DenseVector;
use fps_core::report::{format_f64, write_rounds_csv};
use fps_core::{FpsError, Result};

use crate::config::{DatasetFile, DiagnoseFile, ExperimentFile, SweepFile, TheoryFile};

/// Resolves the seed list from the config plus command-line overrides.
/// `--seeds` replaces the list; `--replicas n` then trims or extends it
/// (extension continues from the max seed).
pub fn resolve_seeds(cfg: &ExperimentFile, seeds: Option<Vec<u64>>, replicas: Option<usize>) -> Vec<u64> {
    let mut out = seeds.unwrap_or_else(|| cfg.seeds.clone());
    if let Some(n) = replicas {
        if n <= out.len() {
            out.truncate(n.max(1));
        } else {
            let mut next = out.iter().copied().max().unwrap_or(0);
            while out.len() < n {
                next += 1;
                out.push(next);
            }
        }
    }
    out
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn is_classification(ds: &Dataset) -> bool {
    ds.task() != Task::Regression
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RunSeedSummary {
    seed: u64,
    csv: String,
    final_test_loss: f64,
    final_log_test_loss: f64,
    final_accuracy: f64,
    final_w_norm_sq: f64,
    max_w_norm_sq: f64,
    rho_gamma: Option<f64>,
}

#[derive(Serialize)]
struct TheoryBlock {
    source: String,
    params: TheoryParams,
    rho_gamma: f64,
    gamma_max: Option<f64>,
    learning_rate_admissible: Option<bool>,
    theorem_bound: analysis::TheoremBound,
}

#[derive(Serialize)]
struct RunSummary {
    config: ExperimentFile,
    seeds: Vec<u64>,
    runs: Vec<RunSeedSummary>,
    mean_final_test_loss: f64,
    std_final_test_loss: f64,
    mean_final_accuracy: f64,
    std_final_accuracy: f64,
    theory: Option<TheoryBlock>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let clean: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if clean.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = clean.len() as f64;
    let mean = clean.iter().sum::<f64>() / n;
    let var = clean.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Executes one seed end to end; returns the metric series.
pub fn run_single(
    cfg: &ExperimentFile,
    seed: u64,
    mu: Option<f64>,
    scenario: Option<u8>,
) -> Result<Vec<RoundMetrics>> {
    let (ds, _) = cfg.build_dataset(seed)?;
    let fed = cfg.federated_config(seed, mu, scenario);
    fps_core::federated::run_experiment(&fed, &ds)
}

pub struct RunOutputs {
    pub csv_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

pub fn cmd_run(cfg: &ExperimentFile, out_dir: &Path, seeds: &[u64]) -> Result<RunOutputs> {
    ensure_dir(out_dir)?;
    let results: Vec<(u64, Vec<RoundMetrics>)> = seeds
        .par_iter()
        .map(|&seed| run_single(cfg, seed, None, None).map(|m| (seed, m)))
        .collect::<Result<Vec<_>>>()?;

    let mut csv_paths = Vec::new();
    let mut runs = Vec::new();
    for (seed, metrics) in &results {
        let name = format!("rounds_seed{seed}.csv");
        let path = out_dir.join(&name);
        write_rounds_csv(&path, metrics)?;
        csv_paths.push(path);
        let last = metrics.last();
        let max_w = metrics.iter().map(|m| m.w_norm_sq).fold(0.0f64, f64::max);
        runs.push(RunSeedSummary {
            seed: *seed,
            csv: name,
            final_test_loss: last.map_or(f64::NAN, |m| m.test_loss),
            final_log_test_loss: last.map_or(f64::NAN, |m| m.log_test_loss),
            final_accuracy: last.map_or(f64::NAN, |m| m.accuracy),
            final_w_norm_sq: last.map_or(f64::NAN, |m| m.w_norm_sq),
            max_w_norm_sq: max_w,
            rho_gamma: None,
        });
    }

    let theory = build_theory_block(cfg, &results).ok();
    let (mean_loss, std_loss) =
        mean_std(&runs.iter().map(|r| r.final_test_loss).collect::<Vec<_>>());
    let (mean_acc, std_acc) =
        mean_std(&runs.iter().map(|r| r.final_accuracy).collect::<Vec<_>>());

    let summary = RunSummary {
        config: cfg.clone(),
        seeds: seeds.to_vec(),
        runs,
        mean_final_test_loss: mean_loss,
        std_final_test_loss: std_loss,
        mean_final_accuracy: mean_acc,
        std_final_accuracy: std_acc,
        theory,
    };
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())?;
    Ok(RunOutputs { csv_paths, summary_path })
}

/// Theory quantities for the summary: explicit config values where given,
/// cheap estimates (smoothness, dissimilarity at the start, iterate bound
/// from the observed run) otherwise, and the unbiased defaults for the
/// bias/noise constants.
fn build_theory_block(
    cfg: &ExperimentFile,
    results: &[(u64, Vec<RoundMetrics>)],
) -> Result<TheoryBlock> {
    let seed = results.first().map_or(0, |(s, _)| *s);
    let (params, source, _) = resolve_theory_params(cfg, seed, false)?;
    let mut params = params;
    // iterate bound from the realized runs unless pinned
    let observed_w = results
        .iter()
        .flat_map(|(_, ms)| ms.iter().map(|m| m.w_norm_sq))
        .fold(0.0f64, f64::max);
    if cfg.theory.as_ref().and_then(|t| t.iterate_bound).is_none() && observed_w > 0.0 {
        params.iterate_bound = observed_w;
    }
    let f0_gap = cfg
        .theory
        .as_ref()
        .and_then(|t| t.f0_gap)
        .unwrap_or_else(|| initial_loss(cfg, seed).unwrap_or(f64::NAN));
    let bound = theorem_rhs(&params, f0_gap);
    let gmax = gamma_max(&params).ok();
    Ok(TheoryBlock {
        source,
        params,
        rho_gamma: rho(&params),
        gamma_max: gmax,
        learning_rate_admissible: gmax.map(|g| params.gamma <= g),
        theorem_bound: bound,
    })
}

/// f(w0) on the training split; with losses bounded below by zero this is a
/// conservative stand-in for the initial optimality gap.
fn initial_loss(cfg: &ExperimentFile, seed: u64) -> Result<f64> {
    let (ds, _) = cfg.build_dataset(seed)?;
    let base = if is_classification(&ds) { BaseLoss::Logistic } else { BaseLoss::SquaredError };
    let w0 = DenseVector::zeros(ds.dim());
    let (loss, _) = analysis::evaluate_model(base, &w0, &ds);
    Ok(loss)
}

/// Assembles TheoryParams from config + estimation. With `probe` set, the
/// bias/noise constants are fitted from replica probes along a short
/// trajectory; otherwise missing ones default to the unbiased case.
fn resolve_theory_params(
    cfg: &ExperimentFile,
    seed: u64,
    probe: bool,
) -> Result<(TheoryParams, String, Option<ProbeFitReport>)> {
    let tfile = cfg.theory.clone().unwrap_or_default();
    let (ds, _) = cfg.build_dataset(seed)?;
    let base = if is_classification(&ds) { BaseLoss::Logistic } else { BaseLoss::SquaredError };

    let smoothness = match tfile.smoothness {
        Some(l) => l,
        None => {
            // power iteration over a capped row sample
            let cap = ds.len().min(2000);
            let rows: Vec<&fps_core::SparseVector> = (0..cap).map(|i| ds.row(i)).collect();
            let lambda = estimate_smoothness(&rows, ds.dim(), 100);
            match base {
                BaseLoss::SquaredError => lambda,
                BaseLoss::Logistic => lambda / 4.0,
            }
        }
    };

    let fed = cfg.federated_config(seed, None, None);
    let dissimilarity = match tfile.dissimilarity {
        Some(b) => b,
        None => {
            let tr = Trainer::new(fed.clone(), &ds)?;
            let est = analysis::estimate_dissimilarity(
                tr.train_set(),
                &tr.shards(),
                base,
                &DenseVector::zeros(ds.dim()),
            );
            if est.value.is_finite() {
                est.value.max(1.0)
            } else {
                1.0
            }
        }
    };

    let power = tfile.power.unwrap_or(match &cfg.dataset {
        DatasetFile::SyntheticRegression(r) => r.power,
        _ => 2.0,
    });

    let cols = cfg.options.sketch_cols.unwrap_or(cfg.subcarriers / cfg.sketch_rows.max(1));
    let width_multiple = (cols as f64 / cfg.heavy_hitters as f64).max(1.0);

    let mut params = TheoryParams {
        smoothness,
        mu: cfg.mu,
        dissimilarity,
        bias_scale: tfile.bias_scale.unwrap_or(0.0),
        bias_floor: tfile.bias_floor.unwrap_or(0.0),
        noise_scale: tfile.noise_scale.unwrap_or(0.0),
        noise_floor: tfile.noise_floor.unwrap_or(0.0),
        local_epochs: cfg.local_epochs as f64,
        gamma: cfg.learning_rate,
        width_multiple,
        heavy_hitters: cfg.heavy_hitters as f64,
        dim: ds.dim() as f64,
        power,
        rounds: cfg.rounds as f64,
        delta: tfile.delta,
        iterate_bound: tfile.iterate_bound.unwrap_or(1.0),
    };

    let needs_probe = tfile.bias_scale.is_none()
        || tfile.bias_floor.is_none()
        || tfile.noise_scale.is_none()
        || tfile.noise_floor.is_none();
    let mut source = "config+estimated".to_string();
    let mut fit_report = None;
    if probe && needs_probe {
        let fit = fit_bias_noise_constants(cfg, &ds, seed, &tfile)?;
        if tfile.bias_scale.is_none() {
            params.bias_scale = fit.bias_scale;
        }
        if tfile.bias_floor.is_none() {
            params.bias_floor = fit.bias_floor;
        }
        if tfile.noise_scale.is_none() {
            params.noise_scale = fit.noise_scale;
        }
        if tfile.noise_floor.is_none() {
            params.noise_floor = fit.noise_floor;
        }
        source = "config+probe-fit".to_string();
        fit_report = Some(fit);
    } else if needs_probe {
        source = "config+unbiased-defaults".to_string();
    }
    Ok((params, source, fit_report))
}

#[derive(Clone, Debug, Serialize)]
struct ProbeFitReport {
    bias_scale: f64,
    bias_floor: f64,
    noise_scale: f64,
    noise_floor: f64,
    bias_fit_r2: f64,
    noise_fit_r2: f64,
    probe_points: usize,
    replicas: usize,
}

/// Least-squares fit of ||bias||^2 and noise power against the squared full
/// gradient norm across probe points along a short trajectory, clipped to
/// the admissible ranges.
fn fit_bias_noise_constants(
    cfg: &ExperimentFile,
    ds: &Dataset,
    seed: u64,
    tfile: &TheoryFile,
) -> Result<ProbeFitReport> {
    let base = if is_classification(ds) { BaseLoss::Logistic } else { BaseLoss::SquaredError };
    let fed = cfg.federated_config(seed, None, None);
    let mut tr = Trainer::new(fed.clone(), ds)?;

    // trajectory snapshots
    let mut points: Vec<DenseVector> = vec![DenseVector::zeros(ds.dim())];
    for t in 0..tfile.probe_rounds.saturating_sub(1) {
        tr.step_round(t)?;
        points.push(tr.server_model().clone());
    }

    let mut xs = Vec::new(); // ||grad f||^2
    let mut bias_ys = Vec::new();
    let mut noise_ys = Vec::new();
    for w in &points {
        let grads = client_full_gradients(tr.train_set(), &tr.shards(), base, w);
        let m = grads.len().max(1) as f64;
        let mut full = DenseVector::zeros(ds.dim());
        for g in &grads {
            full.axpy(1.0 / m, g);
        }
        let est = estimate_bias_noise(&mut tr, w, tfile.probe_replicas)?;
        xs.push(full.norm_sq());
        bias_ys.push(est.bias_norm_sq);
        noise_ys.push(est.noise_power);
    }

    let (bias_scale, bias_floor, bias_fit_r2) = clipped_line_fit(&xs, &bias_ys, 0.999_999);
    let (noise_scale, noise_floor, noise_fit_r2) = clipped_line_fit(&xs, &noise_ys, f64::INFINITY);
    Ok(ProbeFitReport {
        bias_scale,
        bias_floor,
        noise_scale,
        noise_floor,
        bias_fit_r2,
        noise_fit_r2,
        probe_points: points.len(),
        replicas: tfile.probe_replicas,
    })
}

/// y = slope x + intercept with slope clipped to [0, cap] and intercept to
/// [0, inf); returns (slope, intercept, r2).
fn clipped_line_fit(xs: &[f64], ys: &[f64], cap: f64) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (0.0, ys.first().copied().unwrap_or(0.0).max(0.0), 1.0);
    }
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (y - ybar);
        syy += (y - ybar) * (y - ybar);
    }
    let raw_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let slope = raw_slope.clamp(0.0, cap);
    let intercept = (ybar - slope * xbar).max(0.0);
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepCell {
    mu: f64,
    scenario: u8,
    seeds: Vec<u64>,
    csvs: Vec<String>,
    mean_final_accuracy: f64,
    std_final_accuracy: f64,
    mean_final_test_loss: f64,
    std_final_test_loss: f64,
    mean_final_log_test_loss: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    config: ExperimentFile,
    mu_grid: Vec<f64>,
    scenarios: Vec<u8>,
    seeds: Vec<u64>,
    cells: Vec<SweepCell>,
    /// Per scenario: the mu with the best mean final metric (highest accuracy
    /// for classification, lowest test loss for regression); ties toward the
    /// smaller mu.
    best_mu_per_scenario: BTreeMap<String, f64>,
}

pub struct SweepOutputs {
    pub summary_path: PathBuf,
    pub runs: usize,
}

pub fn cmd_sweep(cfg: &ExperimentFile, out_dir: &Path, seeds: &[u64]) -> Result<SweepOutputs> {
    ensure_dir(out_dir)?;
    let sweep: SweepFile = cfg.sweep.clone().unwrap_or_default();
    let classification_task = match &cfg.dataset {
        DatasetFile::SyntheticClassification(_) => true,
        DatasetFile::Libsvm(l) => l.task != Task::Regression,
        DatasetFile::SyntheticRegression(_) => false,
    };

    let mut jobs = Vec::new();
    for &mu in &sweep.mu_grid {
        for &scenario in &sweep.scenarios {
            for &seed in seeds {
                jobs.push((mu, scenario, seed));
            }
        }
    }
    let results: Vec<(f64, u8, u64, Vec<RoundMetrics>)> = jobs
        .par_iter()
        .map(|&(mu, scenario, seed)| {
            run_single(cfg, seed, Some(mu), Some(scenario)).map(|m| (mu, scenario, seed, m))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for &mu in &sweep.mu_grid {
        for &scenario in &sweep.scenarios {
            let mut csvs = Vec::new();
            let mut accs = Vec::new();
            let mut losses = Vec::new();
            let mut logs = Vec::new();
            for (m, s, seed, metrics) in &results {
                if *m != mu || *s != scenario {
                    continue;
                }
                let name = format!("rounds_mu{mu}_scenario{scenario}_seed{seed}.csv");
                let path = out_dir.join(&name);
                write_rounds_csv(&path, metrics)?;
                csvs.push(name);
                if let Some(last) = metrics.last() {
                    accs.push(last.accuracy);
                    losses.push(last.test_loss);
                    logs.push(last.log_test_loss);
                }
            }
            let (mean_acc, std_acc) = mean_std(&accs);
            let (mean_loss, std_loss) = mean_std(&losses);
            let (mean_log, _) = mean_std(&logs);
            cells.push(SweepCell {
                mu,
                scenario,
                seeds: seeds.to_vec(),
                csvs,
                mean_final_accuracy: mean_acc,
                std_final_accuracy: std_acc,
                mean_final_test_loss: mean_loss,
                std_final_test_loss: std_loss,
                mean_final_log_test_loss: mean_log,
            });
        }
    }

    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for &scenario in &sweep.scenarios {
        let mut best_mu = f64::NAN;
        let mut best_score = f64::NEG_INFINITY;
        for cell in cells.iter().filter(|c| c.scenario == scenario) {
            // maximize accuracy (classification) or negated loss; ties keep
            // the smaller mu, and the grid is iterated in order
            let score = if classification_task {
                cell.mean_final_accuracy
            } else {
                -cell.mean_final_test_loss
            };
            if score > best_score || (score == best_score && cell.mu < best_mu) {
                best_score = score;
                best_mu = cell.mu;
            }
        }
        best.insert(format!("scenario{scenario}"), best_mu);
    }

    let summary = SweepSummary {
        config: cfg.clone(),
        mu_grid: sweep.mu_grid.clone(),
        scenarios: sweep.scenarios.clone(),
        seeds: seeds.to_vec(),
        cells,
        best_mu_per_scenario: best,
    };
    let summary_path = out_dir.join("sweep_summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())?;
    Ok(SweepOutputs { summary_path, runs: results.len() })
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BoundsReport {
    theory_source: String,
    params: TheoryParams,
    rho_gamma: f64,
    gamma_max: Option<f64>,
    no_admissible_rate: bool,
    learning_rate_warning: Option<String>,
    f0_gap: f64,
    theorem_bound: analysis::TheoremBound,
    probe_fit: Option<ProbeFitReport>,
}

pub fn cmd_bounds(cfg: &ExperimentFile, out_dir: Option<&Path>, use_probes: bool) -> Result<String> {
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let (params, source, probe_fit) = resolve_theory_params(cfg, seed, use_probes)?;
    let f0_gap = cfg
        .theory
        .as_ref()
        .and_then(|t| t.f0_gap)
        .unwrap_or_else(|| initial_loss(cfg, seed).unwrap_or(f64::NAN));

    let rho_val = rho(&params);
    let gmax = gamma_max(&params);
    let (gmax_opt, no_rate) = match &gmax {
        Ok(g) => (Some(*g), false),
        Err(_) => (None, true),
    };
    let warning = match gmax_opt {
        Some(g) if params.gamma > g => Some(format!(
            "learning rate {} exceeds the admissible bound {}",
            params.gamma, g
        )),
        None => Some("no admissible learning rate for these constants".to_string()),
        _ => None,
    };
    let bound = theorem_rhs(&params, f0_gap);

    let report = BoundsReport {
        theory_source: source,
        params,
        rho_gamma: rho_val,
        gamma_max: gmax_opt,
        no_admissible_rate: no_rate,
        learning_rate_warning: warning.clone(),
        f0_gap,
        theorem_bound: bound,
        probe_fit,
    };

    let mut text = String::new();
    use std::fmt::Write as _;
    writeln!(text, "rho(gamma)        = {}", format_f64(rho_val)).unwrap();
    match gmax_opt {
        Some(g) => writeln!(text, "gamma_max         = {}", format_f64(g)).unwrap(),
        None => writeln!(text, "gamma_max         = (no admissible rate)").unwrap(),
    }
    writeln!(text, "f0_gap            = {}", format_f64(f0_gap)).unwrap();
    writeln!(text, "bound.optimality  = {}", format_f64(bound.optimality_term)).unwrap();
    writeln!(text, "bound.unsketch    = {}", format_f64(bound.unsketch_term)).unwrap();
    writeln!(text, "bound.bias        = {}", format_f64(bound.bias_term)).unwrap();
    writeln!(text, "bound.noise       = {}", format_f64(bound.noise_term)).unwrap();
    writeln!(text, "bound.total       = {}", format_f64(bound.total)).unwrap();
    if let Some(w) = &warning {
        writeln!(text, "warning: {w}").unwrap();
    }

    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        std::fs::write(dir.join("bounds.json"), serde_json::to_string_pretty(&report).unwrap())?;
    }
    Ok(text)
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

pub struct DiagnoseOutputs {
    pub curves_path: PathBuf,
    pub summary_path: PathBuf,
    pub curve_dumps: usize,
}

/// The compressibility protocol: unconstrained noise-free full-dimension
/// training (full-vector aggregation every epoch, no proximal term), dumping
/// sorted aggregated-gradient curves and compressibility statistics at the
/// checkpoint rounds.
pub fn cmd_diagnose(cfg: &ExperimentFile, out_dir: &Path, seed: u64) -> Result<DiagnoseOutputs> {
    ensure_dir(out_dir)?;
    let diag: DiagnoseFile = cfg.diagnose.clone().unwrap_or_default();
    let (ds, _) = cfg.build_dataset(seed)?;
    let base = if is_classification(&ds) { BaseLoss::Logistic } else { BaseLoss::SquaredError };

    let mut fed: FederatedConfig = cfg.federated_config(seed, Some(0.0), None);
    fed.algorithm = Algorithm::FedProx;
    fed.noise_std = 0.0;
    fed.downlink_noise_std = 0.0;
    fed.local_epochs = 1;
    fed.rounds = diag.rounds;

    let mut tr = Trainer::new(fed, &ds)?;
    let mut curves = std::io::BufWriter::new(std::fs::File::create(out_dir.join("diagnose_curves.csv"))?);
    writeln!(curves, "schema_version,1")?;
    writeln!(curves, "checkpoint_round,rank,abs_gradient")?;
    let mut summary = std::io::BufWriter::new(std::fs::File::create(out_dir.join("diagnose_summary.csv"))?);
    writeln!(summary, "schema_version,1")?;
    writeln!(
        summary,
        "checkpoint_round,soft_sparsity_g,soft_sparsity_w,fitted_power,fit_r2,w_norm_sq,poor_compressibility"
    )?;

    let mut dumps = 0usize;
    for t in 0..diag.rounds {
        tr.step_round(t)?;
        let round_number = t + 1;
        if !diag.checkpoints.contains(&round_number) {
            continue;
        }
        dumps += 1;
        let w = tr.server_model().clone();
        let grads = client_full_gradients(tr.train_set(), &tr.shards(), base, &w);
        let m = grads.len().max(1) as f64;
        let mut g = DenseVector::zeros(ds.dim());
        for gr in &grads {
            g.axpy(1.0 / m, gr);
        }

        let mut mags: Vec<f64> = g.as_slice().iter().map(|v| v.abs()).collect();
        mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        for rank in curve_ranks(mags.len(), diag.curve_points) {
            writeln!(curves, "{round_number},{},{}", rank + 1, format_f64(mags[rank]))?;
        }

        let sp_g = soft_sparsity_slice(g.as_slice()).unwrap_or(f64::NAN);
        let sp_w = soft_sparsity_slice(w.as_slice()).unwrap_or(f64::NAN);
        let fit = fit_power_law(g.as_slice(), Some(diag.curve_points))
            .unwrap_or(analysis::PowerLawFit { exponent: f64::NAN, r2: f64::NAN });
        let poor = sp_g > cfg.subcarriers as f64;
        writeln!(
            summary,
            "{round_number},{},{},{},{},{},{}",
            format_f64(sp_g),
            format_f64(sp_w),
            format_f64(fit.exponent),
            format_f64(fit.r2),
            format_f64(w.norm_sq()),
            poor
        )?;
    }
    curves.flush()?;
    summary.flush()?;
    Ok(DiagnoseOutputs {
        curves_path: out_dir.join("diagnose_curves.csv"),
        summary_path: out_dir.join("diagnose_summary.csv"),
        curve_dumps: dumps,
    })
}

/// Log-spaced rank subsample (0-based), deduplicated, always including the
/// first and last rank.
fn curve_ranks(n: usize, points: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    if points >= n {
        return (0..n).collect();
    }
    let mut out = Vec::with_capacity(points);
    let lo = 0f64;
    let hi = ((n - 1) as f64).ln_1p();
    for i in 0..points {
        let t = lo + (hi - lo) * (i as f64) / ((points - 1) as f64);
        let rank = (t.exp() - 1.0).round() as usize;
        out.push(rank.min(n - 1));
    }
    out.dedup();
    out
}

// ---------------------------------------------------------------------------

/// Maps an error to the process exit code: configuration and parse errors are
/// usage problems (2), everything else is a runtime failure (1).
pub fn exit_code_for(err: &FpsError) -> i32 {
    match err {
        FpsError::Config(_) | FpsError::Parse { .. } => 2,
        _ => 1,
    }
}
