use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use erl_core::energy::{make_sequences, synthetic_weather, EnergyParams, Regime};

use crate::io;

#[derive(Args)]
pub struct GenDataArgs {
    /// Generator seed (same seed, same files).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Trace length in hours.
    #[arg(long, default_value_t = 1440)]
    pub hours: usize,

    /// Weather regime: summerlike | winterlike.
    #[arg(long, default_value = "winterlike")]
    pub regime: String,

    /// Ingest an existing trace CSV instead of synthesizing one.
    #[arg(long)]
    pub from_trace: Option<PathBuf>,

    /// Where to write the hourly trace CSV.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,

    /// Where to write the instance JSON built from the trace.
    #[arg(long)]
    pub instances_out: Option<PathBuf>,

    /// Hitting-cost sharpness for built instances.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,

    /// Sliding-window length in hours (window − 1 action steps).
    #[arg(long, default_value_t = 25)]
    pub window: usize,

    /// Where to write run metadata (defaults next to the main output).
    #[arg(long)]
    pub meta_out: Option<PathBuf>,
}

pub fn run(args: GenDataArgs) -> Result<()> {
    if args.trace_out.is_none() && args.instances_out.is_none() {
        bail!("nothing to do: pass --trace-out and/or --instances-out");
    }
    let regime: Regime = args.regime.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    let records = match &args.from_trace {
        Some(path) => io::read_trace_csv(path)?,
        None => synthetic_weather(args.seed, args.hours, regime),
    };

    let params = EnergyParams { alpha: args.alpha, ..EnergyParams::default() };
    let mut outputs = Vec::new();

    if let Some(path) = &args.trace_out {
        io::write_trace_csv(path, &records)
            .with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path.clone());
    }
    let mut n_instances = 0usize;
    if let Some(path) = &args.instances_out {
        let instances = make_sequences(&records, args.window, &params)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        n_instances = instances.len();
        io::write_instances(path, &instances)?;
        outputs.push(path.clone());
        eprintln!("wrote {} instances to {}", n_instances, path.display());
    }

    let meta_path = args.meta_out.clone().unwrap_or_else(|| {
        let main = args.instances_out.as_ref().or(args.trace_out.as_ref()).unwrap();
        main.with_extension("meta.json")
    });
    let mut digests = serde_json::Map::new();
    for p in &outputs {
        digests.insert(p.display().to_string(), io::sha256_hex(p)?.into());
    }
    io::write_metadata(
        &meta_path,
        &serde_json::json!({
            "command": "gen-data",
            "seed": args.seed,
            "hours": args.hours,
            "regime": args.regime,
            "from_trace": args.from_trace,
            "alpha": args.alpha,
            "window": args.window,
            "n_records": records.len(),
            "n_instances": n_instances,
            "energy_params": params,
            "output_sha256": digests,
        }),
    )?;
    Ok(())
}
