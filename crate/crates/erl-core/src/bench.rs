//! Baseline runner and reporting: per-instance costs, normalized averages,
//! empirical competitive ratios, and cost-ratio histograms.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cost::{Instance, PolyhedralCost, Trajectory};
use crate::error::{Error, Result};
use crate::experts::{offline_opt_dp, offline_opt_subgrad, GridSpec, Greedy, Robust, SubgradConfig};
use crate::policy::{rollout_tape, PolicyParams, RolloutMode};

/// A benchmarked algorithm. Learned entries borrow their parameters.
#[derive(Debug, Clone)]
pub enum Algorithm<'a> {
    /// Offline optimum (grid DP for scalar instances, subgradient otherwise).
    Opt,
    Robust,
    Greedy,
    /// Raw learned optimizer, no robustification.
    Ml { params: &'a PolicyParams },
    /// Follow the learned optimizer until its running cost exceeds
    /// `threshold x` the expert's, then follow the expert for good.
    Switch { params: &'a PolicyParams, threshold: f64 },
    /// Robustified rollout of the given parameters.
    Erl { params: &'a PolicyParams, lambda: f64, slack_b: f64 },
}

impl Algorithm<'_> {
    pub fn label(&self) -> String {
        match self {
            Algorithm::Opt => "opt".into(),
            Algorithm::Robust => "robust".into(),
            Algorithm::Greedy => "greedy".into(),
            Algorithm::Ml { .. } => "ml".into(),
            Algorithm::Switch { .. } => "switch".into(),
            Algorithm::Erl { lambda, .. } => alloc::format!("erl{lambda}"),
        }
    }
}

/// Evaluate one algorithm on one instance.
pub fn run_on_instance(algorithm: &Algorithm<'_>, instance: &Instance) -> Result<Trajectory> {
    let model = instance.cost_model();
    match algorithm {
        Algorithm::Opt => {
            if instance.dim() == 1 {
                offline_opt_dp(instance, &GridSpec::default())
            } else {
                offline_opt_subgrad(instance, &SubgradConfig::default())
            }
        }
        Algorithm::Robust => {
            let trace = crate::experts::run_expert(instance, &Robust { model })?;
            Ok(Trajectory { actions: trace.actions, ledger: trace.ledger })
        }
        Algorithm::Greedy => {
            let expert = Greedy { model, spec: instance.memory().clone() };
            let trace = crate::experts::run_expert(instance, &expert)?;
            Ok(Trajectory { actions: trace.actions, ledger: trace.ledger })
        }
        Algorithm::Ml { params } => {
            let tape = rollout_tape(
                params,
                instance,
                &RolloutMode::<Robust<PolyhedralCost>>::Raw,
            )?;
            instance.evaluate(tape.actions)
        }
        Algorithm::Switch { params, threshold } => switch_policy(instance, params, *threshold),
        Algorithm::Erl { params, lambda, slack_b } => {
            let expert = Robust { model };
            let mode = RolloutMode::Robustified { expert: &expert, lambda: *lambda, slack_b: *slack_b };
            let tape = rollout_tape(params, instance, &mode)?;
            instance.evaluate(tape.actions)
        }
    }
}

/// Per-instance costs of `algorithm` over a dataset.
pub fn run_baseline(algorithm: &Algorithm<'_>, dataset: &[Instance]) -> Result<Vec<f64>> {
    dataset
        .iter()
        .map(|inst| run_on_instance(algorithm, inst).map(|t| t.total_cost()))
        .collect()
}

/// Follow raw learned actions while the running cost stays within
/// `threshold x` the expert's own running cost; at the first would-be
/// violation switch to the expert's actions permanently, paying the one-step
/// memory cost of the jump.
pub fn switch_policy(
    instance: &Instance,
    params: &PolicyParams,
    threshold: f64,
) -> Result<Trajectory> {
    let model = instance.cost_model();
    let ml = rollout_tape(params, instance, &RolloutMode::<Robust<PolyhedralCost>>::Raw)?;
    let robust = crate::experts::run_expert(instance, &Robust { model })?;

    let mut actions: Vec<Vec<f64>> = Vec::with_capacity(instance.horizon());
    let mut ledger = crate::cost::CostLedger::new();
    let mut switched = false;
    for t in 1..=instance.horizon() {
        let history = instance.history_at(t, &actions);
        let candidate = if switched { &robust.actions[t - 1] } else { &ml.actions[t - 1] };
        let (hit, mem) = instance.step_cost(t, candidate, &history)?;
        let chosen = if !switched
            && ledger.cum() + hit + mem > threshold * robust.ledger.cum_at(t)
        {
            switched = true;
            &robust.actions[t - 1]
        } else {
            candidate
        };
        let (hit, mem) = instance.step_cost(t, chosen, &history)?;
        ledger.push(hit, mem, chosen.clone());
        actions.push(chosen.clone());
    }
    Ok(Trajectory { actions, ledger })
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub algorithm: String,
    /// Mean cost divided by the mean offline-optimal cost.
    pub avg_cost_norm: f64,
    /// Maximum per-instance cost ratio against the offline optimum.
    pub emp_cr: f64,
    pub n_instances: usize,
}

/// Density histogram of per-instance cost ratios on `[1, max_ratio)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Left edge of the first bin (ratios below land in the first bin).
    pub lo: f64,
    pub densities: Vec<f64>,
    /// Fraction of instances with ratio ≥ max_ratio ("off the charts").
    pub offchart_mass: f64,
}

impl Histogram {
    pub fn bin_left(&self, i: usize) -> f64 {
        self.lo + self.bin_width * i as f64
    }
}

/// Bin cost ratios into densities: count / (total · bin width). Ratios at or
/// beyond `max_ratio` are tallied separately as off-chart mass.
pub fn histogram(cost_ratios: &[f64], bin_width: f64, max_ratio: f64) -> Result<Histogram> {
    if cost_ratios.is_empty() {
        return Err(Error::Empty("cost ratios"));
    }
    if bin_width <= 0.0 || max_ratio <= 1.0 {
        return Err(Error::InvalidParam("need bin_width > 0 and max_ratio > 1".into()));
    }
    let lo = 1.0;
    let nbins = ((max_ratio - lo) / bin_width) as usize + usize::from(
        ((max_ratio - lo) / bin_width).fract() > 1e-12,
    );
    let mut counts = alloc::vec![0usize; nbins.max(1)];
    let mut offchart = 0usize;
    for &r in cost_ratios {
        if r >= max_ratio {
            offchart += 1;
            continue;
        }
        // Discretization slack can leave ratios a hair below 1; first bin.
        let idx = if r <= lo { 0 } else { ((r - lo) / bin_width) as usize };
        let last = counts.len() - 1;
        counts[idx.min(last)] += 1;
    }
    let n = cost_ratios.len() as f64;
    Ok(Histogram {
        bin_width,
        lo,
        densities: counts.iter().map(|&c| c as f64 / (n * bin_width)).collect(),
        offchart_mass: offchart as f64 / n,
    })
}

/// Aggregate per-instance costs into a [`BenchRow`].
///
/// Instances whose optimal cost is below `1e-12` cannot produce a meaningful
/// ratio; they are excluded from the ratio statistics and counted in the
/// returned `skipped`.
pub fn summarize(
    algorithm: &str,
    costs: &[f64],
    opt_costs: &[f64],
) -> Result<(BenchRow, Vec<f64>, usize)> {
    if costs.is_empty() || costs.len() != opt_costs.len() {
        return Err(Error::DimensionMismatch { expected: opt_costs.len(), got: costs.len() });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut ratios = Vec::with_capacity(costs.len());
    let mut skipped = 0usize;
    for (&c, &o) in costs.iter().zip(opt_costs) {
        if o > 1e-12 {
            ratios.push(c / o);
        } else {
            skipped += 1;
        }
    }
    let emp_cr = ratios.iter().fold(0.0f64, |m, &r| crate::fp::max(m, r));
    let row = BenchRow {
        algorithm: algorithm.into(),
        avg_cost_norm: mean(costs) / crate::fp::max(mean(opt_costs), 1e-300),
        emp_cr,
        n_instances: costs.len(),
    };
    Ok((row, ratios, skipped))
}

/// One algorithm's full report: table row, ratios, histogram.
#[derive(Debug, Clone)]
pub struct AlgorithmReport {
    pub row: BenchRow,
    pub ratios: Vec<f64>,
    pub histogram: Histogram,
    pub skipped_zero_opt: usize,
}

/// Evaluate every algorithm against the shared offline optimum and bin the
/// cost ratios (`bin_width` 0.1 up to ratio 4, off-chart beyond).
pub fn report(
    dataset: &[Instance],
    algorithms: &[Algorithm<'_>],
    bin_width: f64,
    max_ratio: f64,
) -> Result<Vec<AlgorithmReport>> {
    if dataset.is_empty() {
        return Err(Error::Empty("benchmark dataset"));
    }
    let opt_costs = run_baseline(&Algorithm::Opt, dataset)?;
    let mut out = Vec::with_capacity(algorithms.len() + 1);
    let (opt_row, opt_ratios, opt_skipped) = summarize("opt", &opt_costs, &opt_costs)?;
    out.push(AlgorithmReport {
        histogram: histogram(&opt_ratios, bin_width, max_ratio)?,
        row: opt_row,
        ratios: opt_ratios,
        skipped_zero_opt: opt_skipped,
    });
    for alg in algorithms {
        if matches!(alg, Algorithm::Opt) {
            continue;
        }
        let costs = run_baseline(alg, dataset)?;
        let (row, ratios, skipped) = summarize(&alg.label(), &costs, &opt_costs)?;
        out.push(AlgorithmReport {
            histogram: histogram(&ratios, bin_width, max_ratio)?,
            row,
            ratios,
            skipped_zero_opt: skipped,
        });
    }
    Ok(out)
}
