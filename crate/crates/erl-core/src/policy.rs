//! The recurrent optimizer cell and its gradient engine.
//!
//! The cell is a small feed-forward network applied recurrently: its input is
//! the previous `q` post-robustification actions plus the current context,
//! its output the raw action `x̃_t` handed to the projection. Training
//! differentiates *through* the projection: at an active constraint the
//! projection is an implicit layer whose Jacobians follow from the KKT
//! system,
//!
//! ```text
//! ∇_x̃ x = Δ₁₁⁻¹ [I + Δ₁₂ Sc(Δ,Δ₁₁)⁻¹ Δ₂₁ Δ₁₁⁻¹]
//! ∇_cost x = Δ₁₁⁻¹ Δ₁₂ Sc(Δ,Δ₁₁)⁻¹ μ
//! ```
//!
//! with `Δ₁₁ = I + μ∇²φ`, `Δ₁₂ = ∇φ`, `Δ₂₁ = μ∇φᵀ`, `Δ₂₂` the constraint
//! slack, and `Sc` the Schur complement (a scalar here; its pseudo-inverse is
//! 0 when it vanishes). Inactive steps pass gradients through unchanged
//! (`I`, `0`). The backward sweep then runs backpropagation through time,
//! folding both the recurrent cell inputs and the cumulative-cost adjoint
//! `∇_w cost(x_{1:t−1})` back to the first step.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{HittingCost, Instance};
use crate::error::{Error, Result};
use crate::experts::ExpertRule;
use crate::linalg::{dot, Matrix};
use crate::norms::lp_subgradient;
use crate::robustify::{ErlRunner, Geometry, ProjectionResult};

/// Weights, biases, and input/output standardization of the recurrent cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct PolicyParams {
    d: usize,
    m: usize,
    q: usize,
    hidden: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    in_mean: Vec<f64>,
    in_scale: Vec<f64>,
    out_mean: Vec<f64>,
    out_scale: Vec<f64>,
    seed: u64,
}

impl PolicyParams {
    /// Fresh cell with two hidden layers of eight rectified units, weights
    /// uniform in `[−1/√fan_in, 1/√fan_in]`, identity normalization.
    pub fn new(d: usize, m: usize, q: usize, seed: u64) -> Self {
        Self::with_hidden(d, m, q, &[8, 8], seed)
    }

    pub fn with_hidden(d: usize, m: usize, q: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nin = q * d + m;
        let mut sizes = vec![nin];
        sizes.extend_from_slice(hidden);
        sizes.push(d);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = 1.0 / crate::fp::sqrt(fan_in as f64);
            let mut mat = Matrix::zeros(fan_out, fan_in);
            for i in 0..fan_out {
                for j in 0..fan_in {
                    mat.set(i, j, rng.random_range(-s..s));
                }
            }
            let b: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-s..s)).collect();
            weights.push(mat);
            biases.push(b);
        }
        Self {
            d,
            m,
            q,
            hidden: hidden.to_vec(),
            weights,
            biases,
            in_mean: vec![0.0; nin],
            in_scale: vec![1.0; nin],
            out_mean: vec![0.0; d],
            out_scale: vec![1.0; d],
            seed,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.d, self.m, self.q)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_len(&self) -> usize {
        self.q * self.d + self.m
    }

    /// Per-feature input standardization and output de-standardization.
    pub fn set_normalization(
        &mut self,
        in_mean: Vec<f64>,
        in_scale: Vec<f64>,
        out_mean: Vec<f64>,
        out_scale: Vec<f64>,
    ) -> Result<()> {
        if in_mean.len() != self.input_len() || in_scale.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.input_len(),
                got: in_mean.len(),
            });
        }
        if out_mean.len() != self.d || out_scale.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: out_mean.len() });
        }
        if in_scale.iter().chain(&out_scale).any(|s| *s <= 0.0 || !s.is_finite()) {
            return Err(Error::InvalidParam("normalization scales must be positive".into()));
        }
        self.in_mean = in_mean;
        self.in_scale = in_scale;
        self.out_mean = out_mean;
        self.out_scale = out_scale;
        Ok(())
    }

    /// Replace one layer's weights and bias (shapes checked).
    pub fn set_layer(&mut self, layer: usize, weights: Matrix, bias: Vec<f64>) -> Result<()> {
        let cur = &self.weights[layer];
        if weights.rows() != cur.rows() || weights.cols() != cur.cols() {
            return Err(Error::DimensionMismatch { expected: cur.rows(), got: weights.rows() });
        }
        if bias.len() != self.biases[layer].len() {
            return Err(Error::DimensionMismatch {
                expected: self.biases[layer].len(),
                got: bias.len(),
            });
        }
        self.weights[layer] = weights;
        self.biases[layer] = bias;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.rows() * w.cols() + b.len())
            .sum()
    }

    /// Flattened view: per layer, row-major weights then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for i in 0..w.rows() {
                for j in 0..w.cols() {
                    out.push(w.get(i, j));
                }
            }
            out.extend_from_slice(b);
        }
        out
    }

    /// Overwrite all parameters from a flat vector (inverse of [`flatten`]).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite parameter value".into()));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for i in 0..w.rows() {
                for j in 0..w.cols() {
                    w.set(i, j, flat[k]);
                    k += 1;
                }
            }
            for bi in b.iter_mut() {
                *bi = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn assemble_input(&self, prev_actions: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
        if prev_actions.len() != self.q {
            return Err(Error::HistoryLength { expected: self.q, got: prev_actions.len() });
        }
        if y.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: y.len() });
        }
        let mut v = Vec::with_capacity(self.input_len());
        for a in prev_actions {
            if a.len() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, got: a.len() });
            }
            v.extend_from_slice(a);
        }
        v.extend_from_slice(y);
        Ok(v)
    }

    /// One cell evaluation: `x̃ = h_w(x_{t−1..t−q}, y_t)`.
    pub fn forward(&self, prev_actions: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_tape(prev_actions, y)?.0)
    }

    /// Forward pass that also caches everything the backward sweep needs.
    pub fn forward_tape(
        &self,
        prev_actions: &[Vec<f64>],
        y: &[f64],
    ) -> Result<(Vec<f64>, CellTape)> {
        let raw_in = self.assemble_input(prev_actions, y)?;
        let normed: Vec<f64> = raw_in
            .iter()
            .zip(self.in_mean.iter().zip(&self.in_scale))
            .map(|(v, (mu, s))| (v - mu) / s)
            .collect();

        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut act = Vec::with_capacity(layers);
        let mut h = normed.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.matvec(&h);
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
            pre.push(z.clone());
            if l + 1 < layers {
                for zi in z.iter_mut() {
                    if *zi < 0.0 {
                        *zi = 0.0;
                    }
                }
            }
            act.push(z.clone());
            h = z;
        }
        let x_tilde: Vec<f64> = h
            .iter()
            .zip(self.out_mean.iter().zip(&self.out_scale))
            .map(|(r, (mu, s))| r * s + mu)
            .collect();
        Ok((x_tilde, CellTape { input_norm: normed, pre, act }))
    }

    /// Backward through one cell evaluation.
    ///
    /// Accumulates parameter gradients into `grad` (flat layout of
    /// [`flatten`]) and returns the adjoint of the raw inputs, ordered as
    /// `[x_{t−1}, …, x_{t−q}, y_t]`.
    pub fn backward(&self, tape: &CellTape, dx_tilde: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let layers = self.weights.len();
        // Through the output de-standardization.
        let mut delta: Vec<f64> =
            dx_tilde.iter().zip(&self.out_scale).map(|(g, s)| g * s).collect();

        // Flat offsets mirror flatten(): per layer, weights then bias.
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            offsets.push(off);
            off += w.rows() * w.cols() + b.len();
        }

        for l in (0..layers).rev() {
            let w = &self.weights[l];
            let upstream = if l == 0 { &tape.input_norm } else { &tape.act[l - 1] };
            let base = offsets[l];
            let cols = w.cols();
            for i in 0..w.rows() {
                for j in 0..cols {
                    grad[base + i * cols + j] += delta[i] * upstream[j];
                }
            }
            let bias_base = base + w.rows() * cols;
            for i in 0..w.rows() {
                grad[bias_base + i] += delta[i];
            }
            let mut prev = w.t_matvec(&delta);
            if l > 0 {
                // Rectifier gate of the layer below (zero subgradient at 0).
                for (p, z) in prev.iter_mut().zip(&tape.pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        // Through the input standardization.
        delta.iter().zip(&self.in_scale).map(|(g, s)| g / s).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

/// Cached activations of one cell evaluation.
#[derive(Debug, Clone)]
pub struct CellTape {
    pub input_norm: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
}

/// Per-step record of the robustified forward pass.
#[derive(Debug, Clone)]
pub struct StepTape {
    pub cell: CellTape,
    pub x_tilde: Vec<f64>,
    pub projection: ProjectionResult,
    /// `∂x_t/∂x̃_t` (d×d).
    pub dx_dxtilde: Matrix,
    /// `∂x_t/∂cost(x_{1:t−1})` (d).
    pub dx_dcost: Vec<f64>,
}

/// Whole-episode forward record.
#[derive(Debug, Clone)]
pub struct RolloutTape {
    pub steps: Vec<StepTape>,
    pub actions: Vec<Vec<f64>>,
    /// Post-robustification episode cost (the training loss).
    pub loss: f64,
    /// The expert's own episode cost (robustified rollouts only).
    pub expert_cost: Option<f64>,
    /// Steps whose projection gradient was unavailable and therefore treated
    /// as constant.
    pub frozen_steps: Vec<usize>,
}

/// How the policy's actions are turned into the trajectory.
pub enum RolloutMode<'a, E: ExpertRule> {
    /// Project each action onto the expert-anchored budget set.
    Robustified { expert: &'a E, lambda: f64, slack_b: f64 },
    /// Feed raw actions straight through (the pure learned optimizer).
    Raw,
}

/// Jacobians of the projection at its solution, per the KKT construction.
///
/// Inactive constraints return exactly `(I, 0)`. For active ones the Schur
/// complement is scalar; when it vanishes its pseudo-inverse (zero) drops the
/// correction terms. Returns [`Error::GradientUnavailable`] when `Δ₁₁` cannot
/// be inverted.
pub fn projection_grads(
    result: &ProjectionResult,
    geometry: &Geometry,
    step: usize,
) -> Result<(Matrix, Vec<f64>)> {
    let d = result.x.len();
    if !result.active || result.mu == 0.0 {
        return Ok((Matrix::identity(d), vec![0.0; d]));
    }
    let mu = result.mu;
    let mut delta11 = Matrix::identity(d);
    delta11.add_assign_scaled(&geometry.hess, mu);
    let inv = delta11.inverse().map_err(|_| Error::GradientUnavailable { step })?;
    let u = inv.matvec(&geometry.grad);
    let schur = result.constraint_value - mu * dot(&geometry.grad, &u);
    let schur_inv = if crate::fp::abs(schur) < 1e-300 { 0.0 } else { 1.0 / schur };

    let mut dx_dxtilde = inv.clone();
    dx_dxtilde.add_outer(&u, &u, mu * schur_inv);
    let dx_dcost: Vec<f64> = u.iter().map(|ui| mu * schur_inv * ui).collect();
    Ok((dx_dxtilde, dx_dcost))
}

/// Run the policy over one instance, recording the tape.
pub fn rollout_tape<E: ExpertRule>(
    params: &PolicyParams,
    instance: &Instance,
    mode: &RolloutMode<'_, E>,
) -> Result<RolloutTape> {
    let horizon = instance.horizon();
    let mut steps = Vec::with_capacity(horizon);
    let mut frozen = Vec::new();

    match mode {
        RolloutMode::Robustified { expert, lambda, slack_b } => {
            let mut runner = ErlRunner::new(instance, *expert, *lambda, *slack_b)?;
            for t in 1..=horizon {
                let history = runner.next_history();
                let (x_tilde, cell) = params.forward_tape(&history, instance.context(t)?)?;
                let out = runner.step(&x_tilde)?;
                let (dx_dxtilde, dx_dcost) =
                    match projection_grads(&out.projection, &out.geometry, t) {
                        Ok(pair) => pair,
                        Err(Error::GradientUnavailable { step }) => {
                            frozen.push(step);
                            let d = instance.dim();
                            (Matrix::zeros(d, d), vec![0.0; d])
                        }
                        Err(e) => return Err(e),
                    };
                steps.push(StepTape {
                    cell,
                    x_tilde,
                    projection: out.projection,
                    dx_dxtilde,
                    dx_dcost,
                });
            }
            let (traj, expert) = runner.finish()?;
            Ok(RolloutTape {
                steps,
                actions: traj.actions,
                loss: traj.ledger.cum(),
                expert_cost: Some(expert.total_cost()),
                frozen_steps: frozen,
            })
        }
        RolloutMode::Raw => {
            let d = instance.dim();
            let mut actions: Vec<Vec<f64>> = Vec::with_capacity(horizon);
            for t in 1..=horizon {
                let history = instance.history_at(t, &actions);
                let (x_tilde, cell) = params.forward_tape(&history, instance.context(t)?)?;
                actions.push(x_tilde.clone());
                steps.push(StepTape {
                    cell,
                    x_tilde: x_tilde.clone(),
                    projection: ProjectionResult {
                        x: x_tilde,
                        mu: 0.0,
                        active: false,
                        constraint_value: f64::NEG_INFINITY,
                    },
                    dx_dxtilde: Matrix::identity(d),
                    dx_dcost: vec![0.0; d],
                });
            }
            let loss = instance.total_cost(&actions)?;
            Ok(RolloutTape { steps, actions, loss, expert_cost: None, frozen_steps: frozen })
        }
    }
}

/// Loss and parameter gradient of one episode by backpropagation through
/// time.
///
/// The reverse sweep carries two adjoints: `a_t = ∂loss/∂x_t`, fed by the
/// step's own cost, by later memory terms, and by later cell inputs; and a
/// scalar `γ = ∂loss/∂cum_t` threading the cumulative-cost dependence of
/// later projections back to step 1.
pub fn bptt<E: ExpertRule>(
    params: &PolicyParams,
    instance: &Instance,
    mode: &RolloutMode<'_, E>,
) -> Result<(f64, Vec<f64>)> {
    let tape = rollout_tape(params, instance, mode)?;
    let grad = bptt_backward(params, instance, &tape)?;
    Ok((tape.loss, grad))
}

/// Backward sweep over a recorded rollout.
pub fn bptt_backward(
    params: &PolicyParams,
    instance: &Instance,
    tape: &RolloutTape,
) -> Result<Vec<f64>> {
    let horizon = instance.horizon();
    let d = instance.dim();
    let q = instance.memory().q();
    let spec = instance.memory();
    let model = instance.cost_model();
    let p = spec.p();

    let mut grad = vec![0.0; params.param_count()];
    let mut action_adj: Vec<Vec<f64>> = vec![vec![0.0; d]; horizon];
    // Adjoint of cum_t; the loss is cum_T.
    let mut gamma = 1.0;

    for t in (1..=horizon).rev() {
        let step = &tape.steps[t - 1];
        let x_t = &tape.actions[t - 1];
        let history = instance.history_at(t, &tape.actions[..t - 1]);

        // The step cost f(x_t, y_t) + d(x_t, ·) enters every later cum.
        let gy = model.subgradient(x_t, instance.context(t)?)?;
        crate::linalg::axpy(&mut action_adj[t - 1], gamma, &gy);
        let z = spec.deviation(x_t, &history)?;
        let gz = lp_subgradient(&z, p);
        crate::linalg::axpy(&mut action_adj[t - 1], gamma, &gz);
        for i in 1..=q {
            let s = t as isize - i as isize;
            if s >= 1 {
                let pull = spec.coeff(i).t_matvec(&gz);
                crate::linalg::axpy(&mut action_adj[s as usize - 1], -gamma, &pull);
            }
        }

        // Through the projection: x_t = proj(x̃_t, cum_{t−1}).
        let a_t = action_adj[t - 1].clone();
        if a_t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { step: t });
        }
        let xtilde_adj = step.dx_dxtilde.t_matvec(&a_t);
        let gamma_proj = dot(&a_t, &step.dx_dcost);

        // Through the cell: recurrent flow into the previous q actions.
        let input_adj = params.backward(&step.cell, &xtilde_adj, &mut grad);
        for i in 1..=q {
            let s = t as isize - i as isize;
            if s >= 1 {
                let slice = &input_adj[(i - 1) * d..i * d];
                crate::linalg::axpy(&mut action_adj[s as usize - 1], 1.0, slice);
            }
        }

        gamma += gamma_proj;
        if !gamma.is_finite() {
            return Err(Error::NonFiniteGradient { step: t });
        }
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { step: 0 });
    }
    Ok(grad)
}

// Serialized form: versioned, with explicit shapes validated on load.

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    version: u32,
    d: usize,
    m: usize,
    q: usize,
    hidden: Vec<usize>,
    seed: u64,
    in_mean: Vec<f64>,
    in_scale: Vec<f64>,
    out_mean: Vec<f64>,
    out_scale: Vec<f64>,
    layers: Vec<LayerRepr>,
}

impl From<PolicyParams> for ParamsRepr {
    fn from(p: PolicyParams) -> Self {
        ParamsRepr {
            version: 1,
            d: p.d,
            m: p.m,
            q: p.q,
            hidden: p.hidden.clone(),
            seed: p.seed,
            in_mean: p.in_mean,
            in_scale: p.in_scale,
            out_mean: p.out_mean,
            out_scale: p.out_scale,
            layers: p
                .weights
                .into_iter()
                .zip(p.biases)
                .map(|(w, b)| LayerRepr { w: w.into(), b })
                .collect(),
        }
    }
}

impl TryFrom<ParamsRepr> for PolicyParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        if r.version != 1 {
            return Err(Error::InvalidParam(alloc::format!(
                "unsupported params version {}",
                r.version
            )));
        }
        let mut params = PolicyParams::with_hidden(r.d, r.m, r.q, &r.hidden, r.seed);
        if r.layers.len() != params.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: params.weights.len(),
                got: r.layers.len(),
            });
        }
        for (l, layer) in r.layers.into_iter().enumerate() {
            let w = Matrix::try_from(layer.w)?;
            params.set_layer(l, w, layer.b)?;
        }
        params.set_normalization(r.in_mean, r.in_scale, r.out_mean, r.out_scale)?;
        if !params.is_finite() {
            return Err(Error::InvalidParam("non-finite value in params file".into()));
        }
        Ok(params)
    }
}
