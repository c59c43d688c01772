use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use fps_cli::Invocation;

#[derive(Parser)]
#[command(
    name = "fps",
    about = "Federated learning over noisy bandlimited channels: sketching protocols, baselines, and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment description (JSON).
    config: PathBuf,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of replicas; trims or extends the seed list.
    #[arg(long)]
    replicas: Option<usize>,
    /// Comma-separated replica seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (default: one per core). Outputs are identical for
    /// every thread count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment once per seed; write per-round CSVs and
    /// a JSON summary.
    Run(CommonArgs),
    /// Cross-product of the proximal-coefficient grid and the partitioning
    /// scenarios, with a best-cell summary.
    Sweep(CommonArgs),
    /// Print rho(gamma), the admissible learning-rate bound, and the
    /// convergence-bound breakdown.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Fit the bias/noise constants by replica probes instead of using
        /// unbiased defaults.
        #[arg(long)]
        probes: bool,
    },
    /// Unconstrained noise-free compressibility run with sorted-gradient
    /// curve dumps at checkpoint rounds.
    Diagnose(CommonArgs),
}

fn invocation(c: &CommonArgs) -> Invocation {
    Invocation {
        config_path: c.config.clone(),
        out_dir: c.out.clone(),
        replicas: c.replicas,
        seeds: c.seeds.clone(),
        threads: c.threads,
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(c) => fps_cli::run_entry(&invocation(c)),
        Command::Sweep(c) => fps_cli::sweep_entry(&invocation(c)),
        Command::Bounds { common, probes } => fps_cli::bounds_entry(&invocation(common), *probes),
        Command::Diagnose(c) => fps_cli::diagnose_entry(&invocation(c)),
    };
    std::process::exit(code);
}
