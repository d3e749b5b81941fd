//! Subcommand definitions and dispatch.

mod audit;
mod bench;
mod eval;
mod gen_data;
mod project;
mod train;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "erl",
    version,
    about = "Expert-robustified learning for online optimization with memory costs"
)]
pub struct Cli {
    /// Instance-level worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate synthetic weather traces and/or build instance files.
    GenData(gen_data::GenDataArgs),
    /// Train the recurrent optimizer (end-to-end or standalone).
    Train(train::TrainArgs),
    /// Evaluate trained parameters against the offline optimum and expert.
    Eval(eval::EvalArgs),
    /// Run the full baseline comparison.
    Bench(bench::BenchArgs),
    /// Solve and print one hand-entered projection step.
    Project(project::ProjectArgs),
    /// Re-verify the robustness inequalities over a dataset.
    Audit(audit::AuditArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    // A global pool sized once; later calls are no-ops in-process.
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match cli.command {
        Command::GenData(args) => gen_data::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Bench(args) => bench::run(args),
        Command::Project(args) => project::run(args),
        Command::Audit(args) => audit::run(args),
    }
}

/// Parallel per-instance costs with deterministic (input-ordered) results.
pub(crate) fn par_costs(
    algorithm: &erl_core::bench::Algorithm<'_>,
    dataset: &[erl_core::cost::Instance],
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let costs: erl_core::Result<Vec<f64>> = dataset
        .par_iter()
        .map(|inst| erl_core::bench::run_on_instance(algorithm, inst).map(|t| t.total_cost()))
        .collect();
    Ok(costs?)
}
