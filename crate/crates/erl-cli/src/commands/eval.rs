use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use erl_core::bench::{histogram, summarize, Algorithm};

use crate::commands::par_costs;
use crate::io;

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,

    /// Trained parameters to evaluate under robustification.
    #[arg(long)]
    pub params: PathBuf,

    #[arg(long, default_value_t = 1.4)]
    pub lambda: f64,

    #[arg(long = "slack-b", default_value_t = 0.0)]
    pub slack_b: f64,

    /// Output directory for bench.csv and histogram CSVs.
    #[arg(long)]
    pub out_dir: PathBuf,

    #[arg(long, default_value_t = 0.1)]
    pub bin_width: f64,

    #[arg(long, default_value_t = 4.0)]
    pub max_ratio: f64,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let dataset = io::read_instances(&args.dataset)?;
    let params = io::read_params(&args.params)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let algorithms = vec![
        ("robust".to_string(), Algorithm::Robust),
        (
            format!("erl{}", args.lambda),
            Algorithm::Erl { params: &params, lambda: args.lambda, slack_b: args.slack_b },
        ),
    ];

    let opt_costs = par_costs(&Algorithm::Opt, &dataset)?;
    let mut rows = Vec::new();
    let (opt_row, opt_ratios, _) =
        summarize("opt", &opt_costs, &opt_costs).map_err(|e| anyhow::anyhow!("{e}"))?;
    io::write_histogram_csv(
        &args.out_dir.join("hist_opt.csv"),
        &histogram(&opt_ratios, args.bin_width, args.max_ratio).map_err(|e| anyhow::anyhow!("{e}"))?,
    )?;
    rows.push(opt_row);

    let mut offchart = serde_json::Map::new();
    for (label, alg) in &algorithms {
        let costs = par_costs(alg, &dataset)?;
        let (row, ratios, _) =
            summarize(label, &costs, &opt_costs).map_err(|e| anyhow::anyhow!("{e}"))?;
        let hist = histogram(&ratios, args.bin_width, args.max_ratio)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        io::write_histogram_csv(&args.out_dir.join(format!("hist_{label}.csv")), &hist)?;
        offchart.insert(label.clone(), hist.offchart_mass.into());
        rows.push(row);
    }

    let bench_path = args.out_dir.join("bench.csv");
    io::write_bench_csv(&bench_path, &rows)?;
    for r in &rows {
        println!(
            "{:<10} avg {:.4}  cr {:.4}  (n={})",
            r.algorithm, r.avg_cost_norm, r.emp_cr, r.n_instances
        );
    }

    io::write_metadata(
        &args.out_dir.join("run_metadata.json"),
        &serde_json::json!({
            "command": "eval",
            "dataset": args.dataset,
            "dataset_sha256": io::sha256_hex(&args.dataset)?,
            "params": args.params,
            "params_sha256": io::sha256_hex(&args.params)?,
            "lambda": args.lambda,
            "slack_b": args.slack_b,
            "bin_width": args.bin_width,
            "max_ratio": args.max_ratio,
            "offchart_mass": offchart,
        }),
    )?;
    Ok(())
}
