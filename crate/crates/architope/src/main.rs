//! Thin CLI over the experiment runners.  Every subcommand reads one
//! declarative config; only `--out` and `--seed` override it.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use architope::error::Error;
use architope::experiment::{
    run_diagnostic, run_gap_demo, run_metrics, run_partition, run_upgrade, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "architope", version, about = "Partitioned local-expert experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the configured partition as JSON and validate it.
    Partition(CommonArgs),
    /// Fit local models on every region and report the glued ensemble.
    Upgrade(CommonArgs),
    /// Global polynomial vs architope on a compactly supported target.
    GapDemo(CommonArgs),
    /// Convergence diagnostic for a built-in sequence family.
    Diagnose(CommonArgs),
    /// One-off distance computations between two configured functions.
    Metrics(CommonArgs),
}

fn load(args: &CommonArgs) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(command: &Command) -> Result<(), Error> {
    match command {
        Command::Partition(args) => {
            let config = load(args)?;
            let summary = run_partition(&config, &args.out)?;
            println!(
                "partition: {} regions, valid = {}, max overlap = {:.3e}, uncovered = {:.3e}",
                summary.region_masses.len(),
                summary.valid,
                summary.max_overlap_mass,
                summary.covering_residual
            );
            println!("wrote {}", args.out.join("partition.json").display());
        }
        Command::Upgrade(args) => {
            let config = load(args)?;
            let summary = run_upgrade(&config, &args.out)?;
            println!(
                "upgrade: {} regions, lp_total = {:.6e}, strict_norm = {:.6e}, local_metric = {:.6e}",
                summary.regions_fitted, summary.lp_total, summary.strict_norm, summary.local_metric
            );
            println!(
                "support index = {}, uncovered tail = {}",
                summary.ess_support_index,
                summary
                    .uncovered_tail_mass
                    .map(|t| format!("{t:.6e}"))
                    .unwrap_or_else(|| "n/a".into())
            );
            println!("wrote {}", args.out.join("summary.json").display());
        }
        Command::GapDemo(args) => {
            let config = load(args)?;
            let rows = run_gap_demo(&config, &args.out)?;
            for row in &rows {
                println!(
                    "{:>16}  strict = {:.6e}  off-support mass = {:.6e}",
                    row.label, row.strict_error, row.off_support_mass
                );
            }
            println!("wrote {}", args.out.join("gap_table.csv").display());
        }
        Command::Diagnose(args) => {
            let config = load(args)?;
            let summary = run_diagnostic(&config, &args.out)?;
            println!(
                "diagnostic: verdict = {}, target support = {}, steps = {}",
                summary.verdict,
                summary.target_support,
                summary.per_step.len()
            );
            println!("wrote {}", args.out.join("diagnostic.json").display());
        }
        Command::Metrics(args) => {
            let config = load(args)?;
            let summary = run_metrics(&config, &args.out)?;
            println!(
                "metrics: {} vs {} (p = {}), lp_total = {:.6e}, strict_norm = {:.6e}",
                summary.f_label,
                summary.g_label,
                summary.report.p,
                summary.report.lp_total,
                summary.report.strict_norm
            );
            println!("wrote {}", args.out.join("report.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
