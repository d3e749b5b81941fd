use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use erl_core::bench::{histogram, summarize, Algorithm};

use crate::commands::par_costs;
use crate::io;

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,

    /// End-to-end trained parameters (the robustified entry).
    #[arg(long)]
    pub params_erl: PathBuf,

    /// Standalone-trained parameters (pure learned optimizer, switching, and
    /// the no-end-to-end robustified entry).
    #[arg(long)]
    pub params_ml: PathBuf,

    #[arg(long, default_value_t = 1.4)]
    pub lambda: f64,

    #[arg(long = "slack-b", default_value_t = 0.0)]
    pub slack_b: f64,

    #[arg(long, default_value_t = 1.4)]
    pub switch_threshold: f64,

    #[arg(long)]
    pub out_dir: PathBuf,

    #[arg(long, default_value_t = 0.1)]
    pub bin_width: f64,

    #[arg(long, default_value_t = 4.0)]
    pub max_ratio: f64,
}

pub fn run(args: BenchArgs) -> Result<()> {
    let dataset = io::read_instances(&args.dataset)?;
    let erl_params = io::read_params(&args.params_erl)?;
    let ml_params = io::read_params(&args.params_ml)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let lambda = args.lambda;
    let slack_b = args.slack_b;
    let entries: Vec<(String, Algorithm<'_>)> = vec![
        ("robust".into(), Algorithm::Robust),
        ("greedy".into(), Algorithm::Greedy),
        ("ml".into(), Algorithm::Ml { params: &ml_params }),
        (
            "switch".into(),
            Algorithm::Switch { params: &ml_params, threshold: args.switch_threshold },
        ),
        (format!("rob{lambda}"), Algorithm::Erl { params: &ml_params, lambda, slack_b }),
        (format!("erl{lambda}"), Algorithm::Erl { params: &erl_params, lambda, slack_b }),
    ];

    let opt_costs = par_costs(&Algorithm::Opt, &dataset)?;
    let (opt_row, opt_ratios, skipped) =
        summarize("opt", &opt_costs, &opt_costs).map_err(|e| anyhow::anyhow!("{e}"))?;
    io::write_histogram_csv(
        &args.out_dir.join("hist_opt.csv"),
        &histogram(&opt_ratios, args.bin_width, args.max_ratio)
            .map_err(|e| anyhow::anyhow!("{e}"))?,
    )?;
    let mut rows = vec![opt_row];
    let mut offchart = serde_json::Map::new();
    for (label, alg) in &entries {
        let costs = par_costs(alg, &dataset)?;
        let (row, ratios, _) =
            summarize(label, &costs, &opt_costs).map_err(|e| anyhow::anyhow!("{e}"))?;
        let hist = histogram(&ratios, args.bin_width, args.max_ratio)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        io::write_histogram_csv(&args.out_dir.join(format!("hist_{label}.csv")), &hist)?;
        offchart.insert(label.clone(), hist.offchart_mass.into());
        rows.push(row);
    }

    io::write_bench_csv(&args.out_dir.join("bench.csv"), &rows)?;
    for r in &rows {
        println!(
            "{:<10} avg {:.4}  cr {:.4}  (n={})",
            r.algorithm, r.avg_cost_norm, r.emp_cr, r.n_instances
        );
    }
    if skipped > 0 {
        eprintln!("note: {skipped} instances with near-zero optimal cost excluded from ratios");
    }

    io::write_metadata(
        &args.out_dir.join("run_metadata.json"),
        &serde_json::json!({
            "command": "bench",
            "dataset": args.dataset,
            "dataset_sha256": io::sha256_hex(&args.dataset)?,
            "params_erl": args.params_erl,
            "params_erl_sha256": io::sha256_hex(&args.params_erl)?,
            "params_ml": args.params_ml,
            "params_ml_sha256": io::sha256_hex(&args.params_ml)?,
            "lambda": lambda,
            "slack_b": slack_b,
            "switch_threshold": args.switch_threshold,
            "bin_width": args.bin_width,
            "max_ratio": args.max_ratio,
            "skipped_zero_opt": skipped,
            "offchart_mass": offchart,
        }),
    )?;
    Ok(())
}
