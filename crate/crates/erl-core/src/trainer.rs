//! Training loops for the recurrent optimizer.
//!
//! [`train_erl`] trains end-to-end through the robustification layer: the
//! loss is the post-projection episode cost, differentiated with the KKT
//! projection gradients. [`train_standalone`] trains the same cell as a pure
//! optimizer on raw rollouts; wrapping those weights with the projection at
//! inference time reproduces the training/testing mismatch that end-to-end
//! training removes.
//!
//! The optimizer is plain momentum gradient descent. Losses are divided by a
//! constant reference cost (mean expert cost of the training split by
//! default), which conditions step sizes across data scales without moving
//! the argmin. Runs are bit-deterministic for a fixed seed: shuffles come
//! from a seeded generator and batch gradients reduce in index order.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cost::Instance;
use crate::error::{Error, Result};
use crate::cost::PolyhedralCost;
use crate::experts::Robust;
use crate::policy::{bptt, rollout_tape, PolicyParams, RolloutMode};

/// Type-anchored raw rollout mode (no expert involved).
const RAW: RolloutMode<'static, Robust<PolyhedralCost>> = RolloutMode::Raw;

/// Hyperparameters; the defaults are the benchmark configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub slack_b: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Base learning rate; halved at each epoch in `lr_halve_at`.
    pub lr: f64,
    pub momentum: f64,
    pub lr_halve_at: Vec<usize>,
    pub seed: u64,
    /// Fraction of the dataset held out for validation/early stopping.
    pub val_fraction: f64,
    /// Loss divisor; `None` picks the training split's mean expert cost.
    pub cost_scale: Option<f64>,
    /// Global-norm cap on each batch gradient (after loss scaling); `None`
    /// disables clipping. Recurrent cost coupling can compound adjoints
    /// across active projection steps, so a cap keeps momentum sane.
    pub grad_clip: Option<f64>,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.4,
            slack_b: 0.0,
            epochs: 140,
            batch_size: 50,
            lr: 1e-3,
            momentum: 0.9,
            lr_halve_at: vec![80, 120],
            seed: 0,
            val_fraction: 0.1,
            cost_scale: None,
            grad_clip: Some(5.0),
            hidden: vec![8, 8],
        }
    }
}

/// One line of the training curve; costs are raw (unscaled) means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub train_cost: f64,
    pub val_cost: f64,
}

/// Trained parameters (best validation snapshot) plus the training curve.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: Vec<TrainLogEntry>,
    pub cost_scale: f64,
}

/// Evaluates a batch of instances to `(loss, grad)` pairs, in order.
///
/// The default is sequential; drivers may evaluate members in parallel as
/// long as the returned order matches the input order, which keeps the
/// ordered reduction (and therefore training) bit-deterministic.
pub type BatchEval<'a> =
    dyn Fn(&PolicyParams, &[&Instance]) -> Result<Vec<(f64, Vec<f64>)>> + 'a;

/// End-to-end training through the robustification layer.
pub fn train_erl(dataset: &[Instance], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_erl_with(dataset, cfg, &sequential_eval(Mode::Robustified, cfg))
}

/// [`train_erl`] with a caller-supplied batch evaluator.
pub fn train_erl_with(
    dataset: &[Instance],
    cfg: &TrainConfig,
    eval: &BatchEval<'_>,
) -> Result<TrainOutcome> {
    train_impl(dataset, cfg, Mode::Robustified, eval)
}

/// Standalone training: raw rollouts, no projection in the loss.
pub fn train_standalone(dataset: &[Instance], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_standalone_with(dataset, cfg, &sequential_eval(Mode::Raw, cfg))
}

/// [`train_standalone`] with a caller-supplied batch evaluator.
pub fn train_standalone_with(
    dataset: &[Instance],
    cfg: &TrainConfig,
    eval: &BatchEval<'_>,
) -> Result<TrainOutcome> {
    train_impl(dataset, cfg, Mode::Raw, eval)
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Robustified,
    Raw,
}

/// Per-instance loss and gradient for one training mode; the robustified
/// mode also asserts the competitive bound on every rollout.
pub fn episode_loss_grad(
    params: &PolicyParams,
    instance: &Instance,
    lambda: f64,
    slack_b: f64,
    robustified: bool,
) -> Result<(f64, Vec<f64>)> {
    if robustified {
        let expert = Robust { model: instance.cost_model() };
        let mode = RolloutMode::Robustified { expert: &expert, lambda, slack_b };
        let tape = rollout_tape(params, instance, &mode)?;
        if let Some(expert_cost) = tape.expert_cost {
            let bound = lambda * expert_cost + slack_b + 1e-7;
            if tape.loss > bound {
                return Err(Error::RobustnessViolated { cost: tape.loss, bound });
            }
        }
        let grad = crate::policy::bptt_backward(params, instance, &tape)?;
        Ok((tape.loss, grad))
    } else {
        bptt(params, instance, &RAW)
    }
}

fn sequential_eval(mode: Mode, cfg: &TrainConfig) -> impl Fn(&PolicyParams, &[&Instance]) -> Result<Vec<(f64, Vec<f64>)>> {
    let lambda = cfg.lambda;
    let slack_b = cfg.slack_b;
    move |params: &PolicyParams, batch: &[&Instance]| {
        batch
            .iter()
            .map(|inst| episode_loss_grad(params, inst, lambda, slack_b, mode == Mode::Robustified))
            .collect()
    }
}

/// Forward-only mean episode cost of `params` over `instances`.
pub fn mean_rollout_cost(
    params: &PolicyParams,
    instances: &[&Instance],
    lambda: f64,
    slack_b: f64,
    robustified: bool,
) -> Result<f64> {
    let mut total = 0.0;
    for inst in instances {
        let expert = Robust { model: inst.cost_model() };
        let loss = if robustified {
            let mode = RolloutMode::Robustified { expert: &expert, lambda, slack_b };
            rollout_tape(params, inst, &mode)?.loss
        } else {
            rollout_tape(params, inst, &RAW)?.loss
        };
        total += loss;
    }
    Ok(total / instances.len() as f64)
}

fn train_impl(
    dataset: &[Instance],
    cfg: &TrainConfig,
    mode: Mode,
    eval: &BatchEval<'_>,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParam("batch_size must be positive".into()));
    }
    let d = dataset[0].dim();
    let m = dataset[0].contexts()[0].len();
    let q = dataset[0].memory().q();

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let val_len = ((dataset.len() as f64) * cfg.val_fraction) as usize;
    let val_len = val_len.min(dataset.len().saturating_sub(1));
    let (train_idx, val_idx) = order.split_at(dataset.len() - val_len);
    let train: Vec<&Instance> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let val: Vec<&Instance> = if val_idx.is_empty() {
        train.clone()
    } else {
        val_idx.iter().map(|&i| &dataset[i]).collect()
    };

    let mut params = PolicyParams::with_hidden(d, m, q, &cfg.hidden, cfg.seed);
    apply_normalization(&mut params, &train)?;

    let cost_scale = match cfg.cost_scale {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::InvalidParam(alloc::format!("cost_scale={s} must be > 0"))),
        None => {
            let mut total = 0.0;
            for inst in &train {
                let expert = Robust { model: inst.cost_model() };
                total += crate::experts::run_expert(inst, &expert)?.total_cost();
            }
            let mean = total / train.len() as f64;
            if mean > 1e-12 {
                mean
            } else {
                1.0
            }
        }
    };

    let robustified = mode == Mode::Robustified;
    let mut log = Vec::with_capacity(cfg.epochs + 1);
    let initial_train = mean_rollout_cost(&params, &train, cfg.lambda, cfg.slack_b, robustified)?;
    let initial_val = mean_rollout_cost(&params, &val, cfg.lambda, cfg.slack_b, robustified)?;
    log.push(TrainLogEntry { epoch: 0, train_cost: initial_train, val_cost: initial_val });

    let mut best = (initial_val, params.clone());
    let mut flat = params.flatten();
    let mut velocity = vec![0.0; flat.len()];
    let mut train_order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let halvings = cfg.lr_halve_at.iter().filter(|&&e| epoch >= e).count();
        let lr = cfg.lr * crate::fp::powf(0.5, halvings as f64);

        train_order.shuffle(&mut rng);
        let mut epoch_cost = 0.0;
        for chunk in train_order.chunks(cfg.batch_size) {
            let batch: Vec<&Instance> = chunk.iter().map(|&i| train[i]).collect();
            let results = eval(&params, &batch)?;
            let mut grad = vec![0.0; flat.len()];
            let mut batch_cost = 0.0;
            for (loss, g) in &results {
                epoch_cost += loss;
                batch_cost += loss;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            let batch_mean = batch_cost / batch.len() as f64;
            if !batch_mean.is_finite() || batch_mean > 1e3 * (initial_train + 1e-12) {
                return Err(Error::Diverged { epoch, loss: batch_mean, initial: initial_train });
            }
            let mut scale = 1.0 / (cost_scale * batch.len() as f64);
            if let Some(cap) = cfg.grad_clip {
                let norm = crate::fp::sqrt(crate::linalg::dot(&grad, &grad)) * scale;
                if norm > cap {
                    scale *= cap / norm;
                }
            }
            for (v, g) in velocity.iter_mut().zip(&grad) {
                *v = cfg.momentum * *v - lr * g * scale;
            }
            for (w, v) in flat.iter_mut().zip(&velocity) {
                *w += v;
            }
            params.assign_flat(&flat)?;
        }
        let train_cost = epoch_cost / train.len() as f64;
        if !train_cost.is_finite() || train_cost > 1e3 * (initial_train + 1e-12) {
            return Err(Error::Diverged { epoch, loss: train_cost, initial: initial_train });
        }
        let val_cost = mean_rollout_cost(&params, &val, cfg.lambda, cfg.slack_b, robustified)?;
        log.push(TrainLogEntry { epoch, train_cost, val_cost });
        if val_cost < best.0 {
            best = (val_cost, params.clone());
        }
    }

    Ok(TrainOutcome { params: best.1, log, cost_scale })
}

/// Per-feature standardization from the training split: context statistics
/// for the context features; the same pooled statistics stand in for the
/// action features (actions live in context space).
fn apply_normalization(params: &mut PolicyParams, train: &[&Instance]) -> Result<()> {
    let (d, m, q) = params.dims();
    let mut mean = vec![0.0; m];
    let mut var = vec![0.0; m];
    let mut count = 0usize;
    for inst in train {
        for y in inst.contexts() {
            for (j, v) in y.iter().enumerate() {
                mean[j] += v;
            }
        }
        count += inst.horizon();
    }
    for mu in mean.iter_mut() {
        *mu /= count as f64;
    }
    for inst in train {
        for y in inst.contexts() {
            for (j, v) in y.iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| crate::fp::max(crate::fp::sqrt(v / count as f64), 1e-6))
        .collect();

    let mut in_mean = Vec::with_capacity(q * d + m);
    let mut in_scale = Vec::with_capacity(q * d + m);
    for _ in 0..q {
        in_mean.extend_from_slice(&mean[..d]);
        in_scale.extend_from_slice(&scale[..d]);
    }
    in_mean.extend_from_slice(&mean);
    in_scale.extend_from_slice(&scale);
    params.set_normalization(in_mean, in_scale, mean[..d].to_vec(), scale[..d].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{Instance, MemorySpec};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn sinusoid_dataset(seed: u64, n: usize, horizon: usize) -> Vec<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let phase: f64 = rng.random_range(0.0..core::f64::consts::TAU);
                let level: f64 = rng.random_range(4.0..6.0);
                let contexts: Vec<f64> = (0..horizon)
                    .map(|t| {
                        level + 3.0 * crate::fp::sin(0.8 * t as f64 + phase)
                            + rng.random_range(-0.3..0.3)
                    })
                    .collect();
                Instance::scalar_single_step(contexts[0], &contexts, 0.2).unwrap()
            })
            .collect()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 12,
            batch_size: 16,
            lr: 2e-3,
            lr_halve_at: vec![8],
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialized_params() {
        let data = sinusoid_dataset(1, 20, 6);
        let cfg = TrainConfig { epochs: 0, ..quick_cfg() };
        let out = train_erl(&data, &cfg).unwrap();
        let fresh = {
            let mut p = PolicyParams::with_hidden(1, 1, 1, &cfg.hidden, cfg.seed);
            // Same normalization path as the trainer.
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut rng);
            let val_len = ((data.len() as f64) * cfg.val_fraction) as usize;
            let train: Vec<&Instance> =
                order[..data.len() - val_len].iter().map(|&i| &data[i]).collect();
            apply_normalization(&mut p, &train).unwrap();
            p
        };
        assert_eq!(out.params, fresh);
        assert_eq!(out.log.len(), 1, "only the epoch-0 evaluation is logged");
    }

    #[test]
    fn training_reduces_cost_on_sinusoid_distribution() {
        let data = sinusoid_dataset(7, 120, 24);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 50,
            lr_halve_at: vec![25, 35],
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train_erl(&data, &cfg).unwrap();
        let first = out.log.first().unwrap().train_cost;
        let last = out.log.last().unwrap().train_cost;
        assert!(
            last < 0.9 * first,
            "expected ≥10% improvement, got {first} → {last}"
        );
    }

    #[test]
    fn standalone_training_loss_decreases() {
        let data = sinusoid_dataset(11, 80, 8);
        let out = train_standalone(&data, &quick_cfg()).unwrap();
        let first = out.log.first().unwrap().train_cost;
        let last = out.log.last().unwrap().train_cost;
        assert!(last < first, "{first} → {last}");
    }

    #[test]
    fn lambda_one_training_is_flat() {
        // Gradients at λ=1 are zero up to the boundary-placement residue of
        // the projection (~1e-16), so parameters must stay put to ~ulp and
        // the logged costs must be flat.
        let data = sinusoid_dataset(5, 30, 6);
        let cfg = TrainConfig { lambda: 1.0, epochs: 6, ..quick_cfg() };
        let out = train_erl(&data, &cfg).unwrap();
        let zero_epoch_cfg = TrainConfig { epochs: 0, ..cfg.clone() };
        let untouched = train_erl(&data, &zero_epoch_cfg).unwrap();
        let drift: f64 = out
            .params
            .flatten()
            .iter()
            .zip(untouched.params.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-12, "parameters moved by {drift}");
        let first = out.log[0];
        for e in &out.log {
            assert!((e.val_cost - first.val_cost).abs() < 1e-9);
            assert!((e.train_cost - first.train_cost).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = sinusoid_dataset(9, 40, 6);
        let cfg = TrainConfig { epochs: 4, ..quick_cfg() };
        let a = train_erl(&data, &cfg).unwrap();
        let b = train_erl(&data, &cfg).unwrap();
        assert_eq!(a.params.flatten(), b.params.flatten());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn custom_evaluator_matches_sequential() {
        // An evaluator that preserves order must reproduce the default run,
        // regardless of how it schedules the members.
        let data = sinusoid_dataset(13, 30, 6);
        let cfg = TrainConfig { epochs: 3, ..quick_cfg() };
        let base = train_erl(&data, &cfg).unwrap();
        let reversed_eval = |params: &PolicyParams, batch: &[&Instance]| {
            let mut out: Vec<(usize, (f64, Vec<f64>))> = batch
                .iter()
                .enumerate()
                .rev()
                .map(|(i, inst)| {
                    episode_loss_grad(params, inst, cfg.lambda, cfg.slack_b, true)
                        .map(|r| (i, r))
                })
                .collect::<Result<_>>()?;
            out.sort_by_key(|(i, _)| *i);
            Ok(out.into_iter().map(|(_, r)| r).collect())
        };
        let alt = train_erl_with(&data, &cfg, &reversed_eval).unwrap();
        assert_eq!(base.params.flatten(), alt.params.flatten());
    }

    #[test]
    fn divergence_is_reported() {
        // Raw rollouts can blow up under a huge unclipped step (robustified
        // ones cannot: the projection bounds every episode cost).
        let data = sinusoid_dataset(3, 30, 6);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 8,
            lr: 20.0,
            grad_clip: None,
            lr_halve_at: vec![],
            seed: 1,
            ..TrainConfig::default()
        };
        match train_standalone(&data, &cfg) {
            Err(crate::error::Error::Diverged { epoch, loss, initial }) => {
                assert!(loss > 1e3 * initial, "epoch {epoch}: {loss} vs {initial}");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn q2_dataset_trains() {
        // Multi-step memory: the cell input carries both previous actions.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap();
        let data: Vec<Instance> = (0..24)
            .map(|_| {
                let contexts: Vec<Vec<f64>> =
                    (0..6).map(|_| vec![rng.random_range(2.0..8.0)]).collect();
                let x0 = contexts[0].clone();
                Instance::with_initial(
                    vec![x0.clone(), x0],
                    contexts,
                    0.4,
                    spec.clone(),
                )
                .unwrap()
            })
            .collect();
        let cfg = TrainConfig { epochs: 2, batch_size: 8, ..quick_cfg() };
        let out = train_erl(&data, &cfg).unwrap();
        assert!(out.log.last().unwrap().train_cost.is_finite());
    }
}
