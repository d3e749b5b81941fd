use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use erl_core::cost::Instance;
use erl_core::policy::PolicyParams;
use erl_core::trainer::{
    episode_loss_grad, train_erl_with, train_standalone_with, TrainConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io;

#[derive(Args)]
pub struct TrainArgs {
    /// JSON config file; command-line flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub dataset: Option<PathBuf>,

    /// Where to write the trained parameters (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Where to write the training curve CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,

    #[arg(long)]
    pub lambda: Option<f64>,

    /// Additive robustness slack B.
    #[arg(long = "slack-b")]
    pub slack_b: Option<f64>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// erl (end-to-end through the projection) | standalone (raw rollouts).
    #[arg(long)]
    pub mode: Option<String>,

    #[arg(long)]
    pub meta_out: Option<PathBuf>,
}

/// Config-file schema; every key mirrors a flag.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    lambda: Option<f64>,
    #[serde(rename = "B")]
    slack_b: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    dataset_path: Option<PathBuf>,
    out_path: Option<PathBuf>,
    log_path: Option<PathBuf>,
    mode: Option<String>,
    momentum: Option<f64>,
    lr_halve_at: Option<Vec<usize>>,
    val_fraction: Option<f64>,
    cost_scale: Option<f64>,
    grad_clip: Option<f64>,
    hidden: Option<Vec<usize>>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let dataset_path = args
        .dataset
        .clone()
        .or(file.dataset_path.clone())
        .ok_or_else(|| anyhow::anyhow!("no dataset: pass --dataset or dataset_path"))?;
    let out_path = args
        .out
        .clone()
        .or(file.out_path.clone())
        .ok_or_else(|| anyhow::anyhow!("no output: pass --out or out_path"))?;
    let log_path = args.log.clone().or(file.log_path.clone());
    let mode = args.mode.clone().or(file.mode.clone()).unwrap_or_else(|| "erl".into());
    if mode != "erl" && mode != "standalone" {
        bail!("unknown mode '{mode}', expected erl or standalone");
    }

    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        lambda: args.lambda.or(file.lambda).unwrap_or(defaults.lambda),
        slack_b: args.slack_b.or(file.slack_b).unwrap_or(defaults.slack_b),
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
        lr: args.lr.or(file.lr).unwrap_or(defaults.lr),
        momentum: file.momentum.unwrap_or(defaults.momentum),
        lr_halve_at: file.lr_halve_at.clone().unwrap_or_else(|| defaults.lr_halve_at.clone()),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        val_fraction: file.val_fraction.unwrap_or(defaults.val_fraction),
        cost_scale: file.cost_scale.or(defaults.cost_scale),
        grad_clip: file.grad_clip.or(defaults.grad_clip),
        hidden: file.hidden.clone().unwrap_or_else(|| defaults.hidden.clone()),
    };

    let dataset = io::read_instances(&dataset_path)?;
    let robustified = mode == "erl";
    let (lambda, slack_b) = (cfg.lambda, cfg.slack_b);
    let eval = move |params: &PolicyParams, batch: &[&Instance]| {
        batch
            .par_iter()
            .map(|inst| episode_loss_grad(params, inst, lambda, slack_b, robustified))
            .collect()
    };
    let outcome = if robustified {
        train_erl_with(&dataset, &cfg, &eval)
    } else {
        train_standalone_with(&dataset, &cfg, &eval)
    }
    .map_err(|e| anyhow::anyhow!("{e}"))?;

    io::write_params(&out_path, &outcome.params)?;
    if let Some(path) = &log_path {
        io::write_train_log(path, &outcome.log)?;
    }
    let last = outcome.log.last().expect("log has the initial entry");
    eprintln!(
        "trained {} epochs (mode {mode}); train {:.4} val {:.4}; params -> {}",
        cfg.epochs,
        last.train_cost,
        last.val_cost,
        out_path.display()
    );

    let meta_path =
        args.meta_out.clone().unwrap_or_else(|| out_path.with_extension("meta.json"));
    io::write_metadata(
        &meta_path,
        &serde_json::json!({
            "command": "train",
            "mode": mode,
            "config": cfg,
            "dataset": dataset_path,
            "dataset_sha256": io::sha256_hex(&dataset_path)?,
            "params_out": out_path,
            "params_sha256": io::sha256_hex(&out_path)?,
            "cost_scale": outcome.cost_scale,
            "final_train_cost": last.train_cost,
            "final_val_cost": last.val_cost,
        }),
    )?;
    Ok(())
}
