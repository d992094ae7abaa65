use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use dpmix::privacy::{calibrate_sigma, PrivacyBudget};
use dpmix::topology::{gen_erdos_renyi, metropolis_weights};
use dpmix_cli::config::ExperimentConfig;
use dpmix_cli::runner::run_experiment;
use dpmix_cli::summary::{render_table, summarize, write_summary};

/// Decentralized differentially private min-max optimization experiments.
#[derive(Parser)]
#[command(name = "dpmix", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config (or an emitted manifest).
    Run {
        config: PathBuf,
    },
    /// Aggregate final-epoch AUROC over seeds from result CSVs.
    Summarize {
        files: Vec<PathBuf>,
        /// Also write the summary as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the calibrated per-iteration noise scale.
    Calibrate {
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        gamma: f64,
        /// Number of parameter updates.
        #[arg(long = "T")]
        iterations: usize,
        /// Number of agents.
        #[arg(long = "m")]
        agents: usize,
        /// Gradient-norm bound.
        #[arg(long = "Lg")]
        grad_bound: f64,
        /// Calibration constant.
        #[arg(long = "c", default_value_t = 1.0)]
        c: f64,
    },
    /// Generate a topology and print its edge list and spectral gap.
    Topology {
        #[arg(long = "m")]
        agents: usize,
        #[arg(long = "p")]
        sparsity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_path(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let output = run_experiment(&cfg).context("experiment failed")?;
            println!(
                "wrote {} rows to {} (manifest: {})",
                output.rows_written,
                output.results_csv.display(),
                output.manifest.display()
            );
        }
        Command::Summarize { files, out } => {
            anyhow::ensure!(!files.is_empty(), "need at least one results CSV");
            let rows = summarize(&files).context("summarizing results")?;
            print!("{}", render_table(&rows));
            if let Some(path) = out {
                write_summary(&path, &rows).context("writing summary CSV")?;
            }
        }
        Command::Calibrate { theta, gamma, iterations, agents, grad_bound, c } => {
            let budget = PrivacyBudget::with_constant(theta, gamma, c, grad_bound)
                .context("invalid privacy budget")?;
            let (sigma, _) = calibrate_sigma(&budget, iterations, agents);
            println!("{sigma}");
        }
        Command::Topology { agents, sparsity, seed } => {
            let graph = gen_erdos_renyi(agents, sparsity, seed);
            let mixing = metropolis_weights(&graph).context("building mixing matrix")?;
            println!(
                "# m = {}, |E| = {}, effective p = {}, repaired = {}, lambda = {}",
                graph.num_agents(),
                graph.num_edges(),
                graph.sparsity(),
                graph.was_repaired(),
                mixing.lambda()
            );
            print!("{}", graph.to_edge_list());
        }
    }
    Ok(())
}
