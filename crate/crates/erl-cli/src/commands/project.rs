use anyhow::{Context, Result};
use clap::Args;
use erl_core::cost::{MemorySpec, PolyhedralCost};
use erl_core::robustify::{project, RobustBudget, StepContext};

/// Scalar single-step projection inspector (d = 1).
#[derive(Args)]
pub struct ProjectArgs {
    /// Learned action to robustify.
    #[arg(long)]
    pub x_tilde: f64,

    /// Current context y_t.
    #[arg(long)]
    pub y: f64,

    /// Robustified history, newest first, comma-separated (q values).
    #[arg(long)]
    pub history: String,

    /// Expert window, newest first, comma-separated (q + 1 values starting
    /// with the expert's current action).
    #[arg(long)]
    pub expert_window: String,

    /// Robustified cumulative cost through step t − 1.
    #[arg(long, default_value_t = 0.0)]
    pub cum: f64,

    /// Expert cumulative cost through step t.
    #[arg(long)]
    pub expert_cum: f64,

    #[arg(long, default_value_t = 1.4)]
    pub lambda: f64,

    #[arg(long = "slack-b", default_value_t = 0.0)]
    pub slack_b: f64,

    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,

    /// Norm order.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,

    /// Memory coefficients c_1..c_q, comma-separated.
    #[arg(long, default_value = "1.0")]
    pub coeffs: String,

    #[arg(long, default_value_t = 1)]
    pub t: usize,

    #[arg(long, default_value_t = 24)]
    pub horizon: usize,
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number '{v}'")))
        .collect()
}

pub fn run(args: ProjectArgs) -> Result<()> {
    let coeffs = parse_list(&args.coeffs)?;
    let spec = MemorySpec::scalar(&coeffs, args.p).map_err(|e| anyhow::anyhow!("{e}"))?;
    let history: Vec<Vec<f64>> =
        parse_list(&args.history)?.into_iter().map(|v| vec![v]).collect();
    let expert_window: Vec<Vec<f64>> =
        parse_list(&args.expert_window)?.into_iter().map(|v| vec![v]).collect();
    let model = PolyhedralCost::new(args.alpha, args.p).map_err(|e| anyhow::anyhow!("{e}"))?;
    let y = [args.y];
    let ctx = StepContext {
        model: &model,
        spec: &spec,
        y: &y,
        history: &history,
        expert_window: &expert_window,
        ledger_cum: args.cum,
        t: args.t,
        horizon: args.horizon,
    };
    let budget = RobustBudget::new(args.lambda, args.slack_b, args.expert_cum)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let result = project(&ctx, &[args.x_tilde], &budget)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
