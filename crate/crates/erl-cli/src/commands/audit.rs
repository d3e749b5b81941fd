use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use erl_core::bench::Algorithm;
use erl_core::experts::{audit_cr, offline_opt_dp, robust_cr_bound, CrReport, GridSpec};
use rayon::prelude::*;

use crate::commands::par_costs;
use crate::io;
use crate::InvariantViolation;

/// Re-verify the robustness inequalities over a dataset and exit nonzero on
/// any violation.
///
/// With trained parameters the robustified rollout is checked against
/// λ·(expert cost) + B per instance. Scalar instances additionally check the
/// expert against the grid-optimal cost at the theoretical bound
/// max((β+1)/α, 1), with an additive discretization allowance of
/// 3·spacing·T.
#[derive(Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub dataset: PathBuf,

    /// Trained parameters for the robustified-rollout check.
    #[arg(long)]
    pub params: Option<PathBuf>,

    #[arg(long, default_value_t = 1.4)]
    pub lambda: f64,

    #[arg(long = "slack-b", default_value_t = 0.0)]
    pub slack_b: f64,

    /// Skip the expert-vs-optimum check.
    #[arg(long, default_value_t = false)]
    pub skip_theorem2: bool,

    /// Where to write the per-instance audit CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: AuditArgs) -> Result<()> {
    let dataset = io::read_instances(&args.dataset)?;
    let mut rows: Vec<(usize, String, CrReport)> = Vec::new();

    let robust_costs = par_costs(&Algorithm::Robust, &dataset)?;

    if let Some(params_path) = &args.params {
        let params = io::read_params(params_path)?;
        let erl_costs = par_costs(
            &Algorithm::Erl { params: &params, lambda: args.lambda, slack_b: args.slack_b },
            &dataset,
        )?;
        for (id, (&cost, &reference)) in erl_costs.iter().zip(&robust_costs).enumerate() {
            // The 1e-7 allowance absorbs T-step summation noise.
            let report = audit_cr(cost, reference, args.lambda, args.slack_b + 1e-7);
            rows.push((id, format!("erl{}", args.lambda), report));
        }
    }

    if !args.skip_theorem2 {
        let grid = GridSpec::default();
        let theorem2: Vec<(usize, String, CrReport)> = dataset
            .par_iter()
            .enumerate()
            .filter(|(_, inst)| inst.dim() == 1 && inst.memory().q() <= 2)
            .map(|(id, inst)| {
                let opt = offline_opt_dp(inst, &grid).map(|t| t.total_cost())?;
                let bound = robust_cr_bound(inst.alpha(), inst.memory());
                let slack =
                    3.0 * grid.axis(inst).spacing * inst.horizon() as f64;
                Ok((id, "robust".to_string(), audit_cr(robust_costs[id], opt, bound, slack)))
            })
            .collect::<erl_core::Result<_>>()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        rows.extend(theorem2);
    }

    if let Some(path) = &args.out {
        io::write_audit_csv(path, &rows).with_context(|| format!("writing {}", path.display()))?;
    }

    let violations: Vec<&(usize, String, CrReport)> =
        rows.iter().filter(|(_, _, r)| !r.satisfied).collect();
    println!(
        "audited {} inequalities over {} instances: {} violations",
        rows.len(),
        dataset.len(),
        violations.len()
    );
    if let Some((id, alg, r)) = violations.first() {
        return Err(InvariantViolation(format!(
            "{} violations; first: instance {id} [{alg}] cost {} > {}·{} + {}",
            violations.len(),
            r.cost_alg,
            r.bound,
            r.cost_ref,
            r.slack_b
        ))
        .into());
    }
    Ok(())
}
