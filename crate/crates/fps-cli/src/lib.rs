//! Command-line front end: experiment configuration, execution, sweeps, and
//! diagnostic subcommands over the core simulator.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

pub use commands::{
    cmd_bounds, cmd_diagnose, cmd_run, cmd_sweep, exit_code_for, resolve_seeds, run_single,
};
pub use config::ExperimentFile;

/// Common invocation arguments shared by the subcommands.
#[derive(Clone, Debug, Default)]
pub struct Invocation {
    pub config_path: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub replicas: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub threads: Option<usize>,
}

fn output_dir(cfg: &ExperimentFile, inv: &Invocation) -> PathBuf {
    inv.out_dir
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fps-out"))
}

/// Runs a closure inside a rayon pool of the requested size (or the default
/// global pool). Results are identical for every thread count; the knob only
/// trades latency.
pub fn with_thread_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("pool construction cannot fail for n >= 1")
            .install(f),
    }
}

/// Loads, validates, and executes `run`; returns the process exit code.
pub fn run_entry(inv: &Invocation) -> i32 {
    match run_entry_inner(inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn run_entry_inner(inv: &Invocation) -> fps_core::Result<()> {
    let cfg = ExperimentFile::load(&inv.config_path)?;
    let seeds = resolve_seeds(&cfg, inv.seeds.clone(), inv.replicas);
    let out = output_dir(&cfg, inv);
    let outputs = with_thread_pool(inv.threads, || cmd_run(&cfg, &out, &seeds))?;
    println!(
        "wrote {} round files and {}",
        outputs.csv_paths.len(),
        outputs.summary_path.display()
    );
    Ok(())
}

pub fn sweep_entry(inv: &Invocation) -> i32 {
    match sweep_entry_inner(inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn sweep_entry_inner(inv: &Invocation) -> fps_core::Result<()> {
    let cfg = ExperimentFile::load(&inv.config_path)?;
    let seeds = resolve_seeds(&cfg, inv.seeds.clone(), inv.replicas);
    let out = output_dir(&cfg, inv);
    let outputs = with_thread_pool(inv.threads, || cmd_sweep(&cfg, &out, &seeds))?;
    println!("{} runs logged; summary at {}", outputs.runs, outputs.summary_path.display());
    Ok(())
}

pub fn bounds_entry(inv: &Invocation, probes: bool) -> i32 {
    match bounds_entry_inner(inv, probes) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn bounds_entry_inner(inv: &Invocation, probes: bool) -> fps_core::Result<()> {
    let cfg = ExperimentFile::load(&inv.config_path)?;
    let out = inv.out_dir.clone().or_else(|| cfg.output_dir.as_ref().map(PathBuf::from));
    let text = with_thread_pool(inv.threads, || {
        cmd_bounds(&cfg, out.as_deref().map(Path::new), probes)
    })?;
    print!("{text}");
    Ok(())
}

pub fn diagnose_entry(inv: &Invocation) -> i32 {
    match diagnose_entry_inner(inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn diagnose_entry_inner(inv: &Invocation) -> fps_core::Result<()> {
    let cfg = ExperimentFile::load(&inv.config_path)?;
    let seeds = resolve_seeds(&cfg, inv.seeds.clone(), inv.replicas);
    let out = output_dir(&cfg, inv);
    let outputs = with_thread_pool(inv.threads, || cmd_diagnose(&cfg, &out, seeds[0]))?;
    println!(
        "{} checkpoint dumps; curves at {}",
        outputs.curve_dumps,
        outputs.curves_path.display()
    );
    Ok(())
}
