//! The expert-robustification layer.
//!
//! At step `t` the learned action `x̃_t` is projected onto the budget set
//!
//! ```text
//! { x : cost(x_{1:t−1}) + f(x, y_t) + d(x, x_{t−q:t−1}) + G(x, ·) ≤ λ·cost(x^π_{1:t}) + B }
//! ```
//!
//! where `G` is the reservation cost: the extra budget held back so that
//! returning to the expert's path stays feasible for every possible future.
//! With `G` in place, feasibility of the expert's own next action is
//! preserved by induction from step 1, which makes the robustified
//! trajectory λ-competitive against the expert up to the additive slack `B`.
//!
//! Scalar actions use an exact interval clamp found by bisection on the
//! convex constraint's flanks; vector actions use bisection on the dual
//! multiplier with an inner penalized minimization.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cost::{CostLedger, HittingCost, Instance, MemorySpec, Trajectory};
use crate::error::{Error, Result};
use crate::experts::{ExpertRule, ExpertState, ExpertTrace};
use crate::fp;
use crate::linalg::{dot, sub, Matrix};
use crate::norms::{lp_hessian, lp_norm, lp_subgradient};

/// Absolute tolerance for budget comparisons.
pub const BUDGET_TOL: f64 = 1e-9;

/// Trust level and additive slack, plus the expert's cumulative cost through
/// the current step; the budget right-hand side is `λ·expert_cum + B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustBudget {
    pub lambda: f64,
    pub slack_b: f64,
    pub expert_cum: f64,
}

impl RobustBudget {
    pub fn new(lambda: f64, slack_b: f64, expert_cum: f64) -> Result<Self> {
        if lambda < 1.0 {
            return Err(Error::InvalidParam(alloc::format!("lambda={lambda} must be >= 1")));
        }
        if slack_b < 0.0 {
            return Err(Error::InvalidParam(alloc::format!("slack B={slack_b} must be >= 0")));
        }
        Ok(Self { lambda, slack_b, expert_cum })
    }

    #[inline]
    pub fn rhs(&self) -> f64 {
        self.lambda * self.expert_cum + self.slack_b
    }
}

/// Outcome of one projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    /// Post-robustification action.
    pub x: Vec<f64>,
    /// Dual multiplier of the budget constraint.
    pub mu: f64,
    /// Whether the constraint is tight at `x`.
    pub active: bool,
    /// Constraint LHS − RHS at `x`; at most [`BUDGET_TOL`].
    pub constraint_value: f64,
}

/// Everything the budget constraint needs at one step.
///
/// `history` is the robustified trajectory's newest-first window
/// `[x_{t−1}, …, x_{t−q}]`; `expert_window` is the expert's newest-first
/// window `[x^π_t, x^π_{t−1}, …, x^π_{t−q}]`.
pub struct StepContext<'a, M: HittingCost> {
    pub model: &'a M,
    pub spec: &'a MemorySpec,
    pub y: &'a [f64],
    pub history: &'a [Vec<f64>],
    pub expert_window: &'a [Vec<f64>],
    /// Robustified cumulative cost through step `t−1`.
    pub ledger_cum: f64,
    pub t: usize,
    pub horizon: usize,
}

/// Value, gradient, and Hessian of `φ(x) = f(x,y) + d(x,·) + G(x,·)`.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Matrix,
}

impl<'a, M: HittingCost> StepContext<'a, M> {
    fn check_windows(&self) -> Result<()> {
        let q = self.spec.q();
        if self.history.len() != q {
            return Err(Error::HistoryLength { expected: q, got: self.history.len() });
        }
        if self.expert_window.len() != q + 1 {
            return Err(Error::HistoryLength { expected: q + 1, got: self.expert_window.len() });
        }
        if self.t < 1 || self.t > self.horizon {
            return Err(Error::StepOutOfRange { t: self.t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Constant part of reservation term `k`: `Σ_{i=1}^{q−k} C_{k+i} x_{t−i}
    /// − Σ_{i=0}^{q−k} C_{k+i} x^π_{t−i}`.
    fn reservation_offset(&self, k: usize) -> Vec<f64> {
        let d = self.spec.dim();
        let q = self.spec.q();
        let mut b = vec![0.0; d];
        for i in 1..=(q - k) {
            let v = self.spec.coeff(k + i).matvec(&self.history[i - 1]);
            crate::linalg::axpy(&mut b, 1.0, &v);
        }
        for i in 0..=(q - k) {
            let v = self.spec.coeff(k + i).matvec(&self.expert_window[i]);
            crate::linalg::axpy(&mut b, -1.0, &v);
        }
        b
    }

    /// Number of norm terms in `G`.
    ///
    /// The reservation is held at every step, including the last `q`: the
    /// feasibility induction telescopes over the full sum `k = 1..q`, and
    /// keeping it untruncated is what pins the trajectory to the expert at
    /// λ = 1, B = 0 on *all* steps (a near-horizon truncation would leave
    /// the final steps free to spend the expert's own step cost elsewhere).
    fn reservation_terms(&self) -> usize {
        self.spec.q()
    }

    /// Reservation cost `G(x, history, expert window)`.
    pub fn reservation(&self, x: &[f64]) -> Result<f64> {
        self.check_windows()?;
        let p = self.spec.p();
        let mut total = 0.0;
        for k in 1..=self.reservation_terms() {
            let mut z = self.spec.coeff(k).matvec(x);
            crate::linalg::axpy(&mut z, 1.0, &self.reservation_offset(k));
            total += lp_norm(&z, p);
        }
        Ok(total)
    }

    /// Constraint left-hand side `cost(x_{1:t−1}) + f(x,y_t) + d(x,·) + G(x,·)`.
    pub fn constraint_lhs(&self, x: &[f64]) -> Result<f64> {
        self.check_windows()?;
        let hit = self.model.value(x, self.y)?;
        let mem = crate::cost::memory_cost(x, self.history, self.spec)?;
        Ok(self.ledger_cum + hit + mem + self.reservation(x)?)
    }

    /// Local geometry of `φ = f + d + G` at `x`, for solvers and KKT gradients.
    pub fn geometry(&self, x: &[f64]) -> Result<Geometry> {
        self.check_windows()?;
        let d = self.spec.dim();
        let p = self.spec.p();

        let mut value = self.model.value(x, self.y)?;
        let mut grad = self.model.subgradient(x, self.y)?;
        let mut hess = self.model.hessian(x, self.y)?;

        let z0 = self.spec.deviation(x, self.history)?;
        value += lp_norm(&z0, p);
        crate::linalg::axpy(&mut grad, 1.0, &lp_subgradient(&z0, p));
        hess.add_assign_scaled(&lp_hessian(&z0, p), 1.0);

        for k in 1..=self.reservation_terms() {
            let ck = self.spec.coeff(k);
            let mut z = ck.matvec(x);
            crate::linalg::axpy(&mut z, 1.0, &self.reservation_offset(k));
            value += lp_norm(&z, p);
            let gz = lp_subgradient(&z, p);
            crate::linalg::axpy(&mut grad, 1.0, &ck.t_matvec(&gz));
            // C_k^T H C_k, assembled column by column (d ≤ 16).
            let hz = lp_hessian(&z, p);
            for col in 0..d {
                let mut e = vec![0.0; d];
                e[col] = 1.0;
                let ce = ck.matvec(&e);
                let hce = hz.matvec(&ce);
                let col_v = ck.t_matvec(&hce);
                for row in 0..d {
                    hess.set(row, col, hess.get(row, col) + col_v[row]);
                }
            }
        }
        Ok(Geometry { value, grad, hess })
    }

    /// LHS − RHS of the budget constraint at `x`.
    fn violation(&self, x: &[f64], rhs: f64) -> Result<f64> {
        Ok(self.constraint_lhs(x)? - rhs)
    }
}

/// Reservation cost `G` as a free function (windows as in [`StepContext`]).
pub fn reservation_cost(
    x: &[f64],
    history: &[Vec<f64>],
    expert_window: &[Vec<f64>],
    spec: &MemorySpec,
    t: usize,
    horizon: usize,
) -> Result<f64> {
    // The hitting model never enters G; any placeholder works.
    let model = crate::cost::PolyhedralCost::new(1.0, spec.p())?;
    let ctx = StepContext {
        model: &model,
        spec,
        y: x,
        history,
        expert_window,
        ledger_cum: 0.0,
        t,
        horizon,
    };
    ctx.reservation(x)
}

/// Euclidean projection of `x_tilde` onto the budget set.
///
/// Feasible inputs pass through unchanged with `μ = 0`. Otherwise the
/// result lands on the constraint boundary (feasible side) with `μ > 0`.
/// Errors with [`Error::InfeasibleAtExpert`] when even the expert's action
/// violates the budget, which the feasibility induction rules out unless an
/// upstream ledger is corrupt.
pub fn project<M: HittingCost>(
    ctx: &StepContext<'_, M>,
    x_tilde: &[f64],
    budget: &RobustBudget,
) -> Result<ProjectionResult> {
    let rhs = budget.rhs();
    let psi_tilde = ctx.violation(x_tilde, rhs)?;
    if psi_tilde <= 0.0 {
        return Ok(ProjectionResult {
            x: x_tilde.to_vec(),
            mu: 0.0,
            active: false,
            constraint_value: psi_tilde,
        });
    }

    let anchor = &ctx.expert_window[0];
    let psi_anchor = ctx.violation(anchor, rhs)?;
    if psi_anchor > BUDGET_TOL {
        return Err(Error::InfeasibleAtExpert { violation: psi_anchor });
    }

    if psi_anchor > 0.0 {
        // Feasible only up to tolerance: the set has collapsed to the anchor.
        return finish_at(ctx, anchor.clone(), x_tilde, psi_anchor);
    }

    if ctx.spec.dim() == 1 {
        project_scalar(ctx, x_tilde, rhs, anchor[0])
    } else {
        project_dual(ctx, x_tilde, rhs, anchor)
    }
}

fn finish_at<M: HittingCost>(
    ctx: &StepContext<'_, M>,
    x: Vec<f64>,
    x_tilde: &[f64],
    constraint_value: f64,
) -> Result<ProjectionResult> {
    let mu = if ctx.spec.dim() == 1 {
        scalar_multiplier(ctx, x[0], x_tilde[0])?
    } else {
        // Stationarity x − x̃ + μ∇φ = 0 projected onto the subgradient.
        let geom = ctx.geometry(&x)?;
        let gap = sub(x_tilde, &x);
        let gg = dot(&geom.grad, &geom.grad);
        if gg > 1e-24 {
            fp::max(dot(&gap, &geom.grad) / gg, 0.0)
        } else {
            0.0
        }
    };
    Ok(ProjectionResult { x, mu, active: true, constraint_value })
}

/// Dual multiplier for a clamped scalar projection.
///
/// Stationarity gives `μ = |x̃ − x| / Dφ(x; dir)` with the one-sided slope of
/// `φ` toward `x̃`. Evaluating the slope on the flank (rather than through a
/// point subgradient) keeps μ > 0 when the boundary sits on a kink, where
/// point subgradients can have the wrong sign.
fn scalar_multiplier<M: HittingCost>(
    ctx: &StepContext<'_, M>,
    x: f64,
    x_tilde: f64,
) -> Result<f64> {
    let dir = fp::sign(x_tilde - x);
    if dir == 0.0 {
        return Ok(0.0);
    }
    let eps = 1e-6 * (1.0 + fp::abs(x));
    let base = ctx.constraint_lhs(&[x])?;
    let ahead = ctx.constraint_lhs(&[x + dir * eps])?;
    let slope = (ahead - base) / eps;
    if slope > 1e-12 {
        Ok(fp::abs(x_tilde - x) / slope)
    } else {
        Ok(0.0)
    }
}

/// Scalar path: the feasible set is a closed interval containing the anchor;
/// the convex constraint crosses the budget exactly once on [anchor, x̃], so
/// bisection pins the boundary and the projection is the clamp onto it.
fn project_scalar<M: HittingCost>(
    ctx: &StepContext<'_, M>,
    x_tilde: &[f64],
    rhs: f64,
    anchor: f64,
) -> Result<ProjectionResult> {
    let mut feas = anchor;
    let mut infeas = x_tilde[0];
    for _ in 0..200 {
        let width = fp::abs(infeas - feas);
        if width <= 1e-15 * (1.0 + fp::abs(feas)) {
            break;
        }
        let mid = 0.5 * (feas + infeas);
        if ctx.violation(&[mid], rhs)? <= 0.0 {
            feas = mid;
        } else {
            infeas = mid;
        }
    }
    // A boundary this close to the anchor is a singleton up to rounding;
    // snapping returns the bitwise expert action, which stops float noise
    // from compounding through the ledger feedback at λ = 1 (the feasible
    // width there grows by roughly 1/α per step once seeded).
    let x = if fp::abs(feas - anchor) <= 1e-11 * (1.0 + fp::abs(anchor)) {
        vec![anchor]
    } else {
        vec![feas]
    };
    let constraint_value = ctx.violation(&x, rhs)?;
    finish_at(ctx, x, x_tilde, constraint_value)
}

/// Vector path: bisection on the dual multiplier with an inner penalized
/// minimization of `½‖x − x̃‖² + μ(LHS(x) − RHS)`.
fn project_dual<M: HittingCost>(
    ctx: &StepContext<'_, M>,
    x_tilde: &[f64],
    rhs: f64,
    anchor: &[f64],
) -> Result<ProjectionResult> {
    let mut mu_lo = 0.0;
    let mut mu_hi = 1.0;
    let mut warm = x_tilde.to_vec();
    let mut bracketed: Option<(Vec<f64>, f64, f64)> = None;

    for _ in 0..60 {
        let x = minimize_penalized(ctx, x_tilde, mu_hi, &warm)?;
        warm = x.clone();
        let psi = ctx.violation(&x, rhs)?;
        if psi <= 0.0 {
            bracketed = Some((x, mu_hi, psi));
            break;
        }
        mu_lo = mu_hi;
        mu_hi *= 2.0;
    }
    let Some((mut x_best, mut mu_best, mut psi_best)) = bracketed else {
        // Dual unbounded: the feasible set collapsed to the anchor's vicinity.
        let psi = ctx.violation(anchor, rhs)?;
        return finish_at(ctx, anchor.to_vec(), x_tilde, psi);
    };

    for _ in 0..60 {
        let mu = 0.5 * (mu_lo + mu_hi);
        let x = minimize_penalized(ctx, x_tilde, mu, &warm)?;
        warm = x.clone();
        let psi = ctx.violation(&x, rhs)?;
        if psi <= 0.0 {
            mu_hi = mu;
            x_best = x;
            mu_best = mu;
            psi_best = psi;
        } else {
            mu_lo = mu;
        }
    }
    Ok(ProjectionResult { x: x_best, mu: mu_best, active: true, constraint_value: psi_best })
}

/// Minimize `½‖x − x̃‖² + μ·φ(x)` by gradient descent with Armijo
/// backtracking; subgradients stand in at kinks.
fn minimize_penalized<M: HittingCost>(
    ctx: &StepContext<'_, M>,
    x_tilde: &[f64],
    mu: f64,
    start: &[f64],
) -> Result<Vec<f64>> {
    let mut x = start.to_vec();
    let objective = |x: &[f64]| -> Result<f64> {
        let gap = sub(x, x_tilde);
        Ok(0.5 * dot(&gap, &gap) + mu * ctx.geometry(x)?.value)
    };
    let mut f = objective(&x)?;
    for _ in 0..500 {
        let geom = ctx.geometry(&x)?;
        let mut g = sub(&x, x_tilde);
        crate::linalg::axpy(&mut g, mu, &geom.grad);
        let gnorm2 = dot(&g, &g);
        if gnorm2 <= 1e-24 * (1.0 + f) {
            break;
        }
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let fc = objective(&cand)?;
            if fc <= f - 0.25 * step * gnorm2 {
                x = cand;
                f = fc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(x)
}

/// One step outcome of the robustified rollout.
#[derive(Debug, Clone)]
pub struct ErlStep {
    pub projection: ProjectionResult,
    pub expert_action: Vec<f64>,
    pub budget_rhs: f64,
    /// Geometry of `φ = f + d + G` at the returned action, for KKT gradients.
    pub geometry: Geometry,
}

/// Online runner implementing the robustified inference loop: the expert
/// advances lazily alongside the learned trajectory, one step per call.
pub struct ErlRunner<'a, E: ExpertRule> {
    instance: &'a Instance,
    expert: ExpertState<'a, E>,
    lambda: f64,
    slack_b: f64,
    pub ledger: CostLedger,
    actions: Vec<Vec<f64>>,
    t: usize,
}

impl<'a, E: ExpertRule> ErlRunner<'a, E> {
    pub fn new(instance: &'a Instance, expert: &'a E, lambda: f64, slack_b: f64) -> Result<Self> {
        RobustBudget::new(lambda, slack_b, 0.0)?;
        Ok(Self {
            instance,
            expert: ExpertState::new(instance, expert),
            lambda,
            slack_b,
            ledger: CostLedger::new(),
            actions: Vec::new(),
            t: 0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn done(&self) -> bool {
        self.t >= self.instance.horizon()
    }

    /// Robustified history window for the next step (policy input).
    pub fn next_history(&self) -> Vec<Vec<f64>> {
        self.instance.history_at(self.t + 1, &self.actions)
    }

    /// Robustify one learned action and account its cost.
    pub fn step(&mut self, x_tilde: &[f64]) -> Result<ErlStep> {
        let t = self.t + 1;
        if t > self.instance.horizon() {
            return Err(Error::StepOutOfRange { t, horizon: self.instance.horizon() });
        }
        let expert_action = self.expert.step(t)?;
        let expert_window = self.expert.window(t);
        let history = self.instance.history_at(t, &self.actions);
        let budget = RobustBudget::new(self.lambda, self.slack_b, self.expert.ledger.cum())?;
        let model = self.instance.cost_model();
        let ctx = StepContext {
            model: &model,
            spec: self.instance.memory(),
            y: self.instance.context(t)?,
            history: &history,
            expert_window: &expert_window,
            ledger_cum: self.ledger.cum(),
            t,
            horizon: self.instance.horizon(),
        };
        let projection = project(&ctx, x_tilde, &budget)?;
        let geometry = ctx.geometry(&projection.x)?;
        let (hit, mem) = self.instance.step_cost(t, &projection.x, &history)?;
        self.ledger.push(hit, mem, projection.x.clone());
        self.actions.push(projection.x.clone());
        self.t = t;
        Ok(ErlStep { projection, expert_action, budget_rhs: budget.rhs(), geometry })
    }

    /// Finish the episode, returning the robustified trajectory and the
    /// expert's own trace.
    pub fn finish(self) -> Result<(Trajectory, ExpertTrace)> {
        if self.t != self.instance.horizon() {
            return Err(Error::StepOutOfRange { t: self.t, horizon: self.instance.horizon() });
        }
        Ok((
            Trajectory { actions: self.actions, ledger: self.ledger },
            ExpertTrace { actions: self.expert.actions, ledger: self.expert.ledger },
        ))
    }
}

/// Robustify a precomputed sequence of learned actions over a whole episode.
pub fn robustify_actions<E: ExpertRule>(
    instance: &Instance,
    expert: &E,
    lambda: f64,
    slack_b: f64,
    x_tildes: &[Vec<f64>],
) -> Result<(Trajectory, ExpertTrace)> {
    if x_tildes.len() != instance.horizon() {
        return Err(Error::DimensionMismatch {
            expected: instance.horizon(),
            got: x_tildes.len(),
        });
    }
    let mut runner = ErlRunner::new(instance, expert, lambda, slack_b)?;
    for x in x_tildes {
        runner.step(x)?;
    }
    runner.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{Instance, MemorySpec, PolyhedralCost};
    use crate::experts::Robust;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(alpha: f64) -> PolyhedralCost {
        PolyhedralCost::new(alpha, 2.0).unwrap()
    }

    #[allow(clippy::too_many_arguments)]
    fn scalar_ctx<'a>(
        m: &'a PolyhedralCost,
        spec: &'a MemorySpec,
        y: &'a [f64],
        history: &'a [Vec<f64>],
        expert_window: &'a [Vec<f64>],
        ledger_cum: f64,
        t: usize,
        horizon: usize,
    ) -> StepContext<'a, PolyhedralCost> {
        StepContext { model: m, spec, y, history, expert_window, ledger_cum, t, horizon }
    }

    #[test]
    fn reservation_zero_on_expert_path() {
        let spec = MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap();
        let history = vec![vec![1.0], vec![2.0]];
        let expert_window = vec![vec![3.0], vec![1.0], vec![2.0]];
        // x = x^π_t and identical histories: every term vanishes.
        let g = reservation_cost(&[3.0], &history, &expert_window, &spec, 3, 10).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn reservation_single_step_reduces_to_distance() {
        let spec = MemorySpec::single_step(1, 2.0);
        let history = vec![vec![0.0]];
        let expert_window = vec![vec![5.0], vec![0.0]];
        let g = reservation_cost(&[3.0], &history, &expert_window, &spec, 2, 10).unwrap();
        assert_eq!(g, 2.0);
    }

    #[test]
    fn reservation_held_through_final_step() {
        // Still ‖x − x^π_T‖ at t = T: the hold-back is what keeps λ = 1
        // pinned to the expert on the last step too.
        let spec = MemorySpec::single_step(1, 2.0);
        let history = vec![vec![0.0]];
        let expert_window = vec![vec![5.0], vec![0.0]];
        let g = reservation_cost(&[3.0], &history, &expert_window, &spec, 10, 10).unwrap();
        assert_eq!(g, 2.0);
    }

    #[test]
    fn reservation_matches_term_by_term_reference() {
        // Independent literal re-evaluation of the reservation sum for q=2.
        let spec = MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let x = rng.random_range(-5.0..5.0);
            let h: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
            let e: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let t = rng.random_range(1..=8usize);
            let horizon = 8;
            let history = vec![vec![h[0]], vec![h[1]]];
            let window = vec![vec![e[0]], vec![e[1]], vec![e[2]]];
            let got = reservation_cost(&[x], &history, &window, &spec, t, horizon).unwrap();
            // By hand with c = (2, −1), terms k = 1..q:
            //   k=1: |c1·x + c2·h1 − (c1·e0 + c2·e1)|
            //   k=2: |c2·x − c2·e0|
            let (c1, c2) = (2.0, -1.0);
            let _ = horizon;
            let expect = (c1 * x + c2 * h[0] - (c1 * e[0] + c2 * e[1])).abs()
                + (c2 * x - c2 * e[0]).abs();
            assert!((got - expect).abs() < 1e-12, "got {got} expect {expect}");
        }
    }

    #[test]
    fn constraint_lhs_at_expert_equals_expert_cum() {
        // With identical histories and ledger_cum = expert cum through t−1,
        // the LHS at x^π_t is exactly the expert's cumulative cost through t.
        let inst = Instance::scalar_single_step(0.0, &[4.0, 1.0, 3.0], 0.5).unwrap();
        let robust = Robust { model: inst.cost_model() };
        let trace = crate::experts::run_expert(&inst, &robust).unwrap();
        let m = inst.cost_model();
        for t in 1..=3usize {
            let history = inst.history_at(t, &trace.actions[..t - 1]);
            let mut window = vec![trace.actions[t - 1].clone()];
            window.extend(history.clone());
            let ctx = scalar_ctx(
                &m,
                inst.memory(),
                inst.context(t).unwrap(),
                &history,
                &window,
                trace.ledger.cum_at(t - 1),
                t,
                3,
            );
            let lhs = ctx.constraint_lhs(&trace.actions[t - 1]).unwrap();
            assert!((lhs - trace.ledger.cum_at(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn constraint_lhs_hand_value() {
        // Pinned scalar step: cum=2, α=0.5, y=4, hist=[1], expert now at 4.
        // LHS(x=2) = 2 + 0.5·|2−4| + |2−1| + |2−4| = 6.
        let spec = MemorySpec::single_step(1, 2.0);
        let m = model(0.5);
        let history = vec![vec![1.0]];
        let window = vec![vec![4.0], vec![1.0]];
        let ctx = scalar_ctx(&m, &spec, &[4.0], &history, &window, 2.0, 1, 5);
        assert!((ctx.constraint_lhs(&[2.0]).unwrap() - 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn constraint_lhs_is_convex(
            a in -8.0f64..8.0,
            b in -8.0f64..8.0,
            y in -8.0f64..8.0,
            h in -8.0f64..8.0,
            e0 in -8.0f64..8.0,
            alpha in 0.1f64..3.0,
        ) {
            let spec = MemorySpec::single_step(1, 2.0);
            let m = model(alpha);
            let history = vec![vec![h]];
            let window = vec![vec![e0], vec![h]];
            let yv = [y];
            let ctx = scalar_ctx(&m, &spec, &yv, &history, &window, 1.0, 2, 6);
            let mid = 0.5 * (a + b);
            let lhs_mid = ctx.constraint_lhs(&[mid]).unwrap();
            let avg = 0.5 * (ctx.constraint_lhs(&[a]).unwrap() + ctx.constraint_lhs(&[b]).unwrap());
            prop_assert!(lhs_mid <= avg + 1e-9);
        }
    }

    #[test]
    fn project_interior_passes_through() {
        let spec = MemorySpec::single_step(1, 2.0);
        let m = model(0.2);
        let history = vec![vec![0.0]];
        let window = vec![vec![1.0], vec![0.0]];
        let ctx = scalar_ctx(&m, &spec, &[1.0], &history, &window, 0.0, 1, 4);
        // Huge budget: anything nearby is feasible.
        let budget = RobustBudget::new(1.0, 100.0, 0.2).unwrap();
        let r = project(&ctx, &[2.5], &budget).unwrap();
        assert_eq!(r.x, vec![2.5]);
        assert_eq!(r.mu, 0.0);
        assert!(!r.active);
    }

    #[test]
    fn project_lambda_one_pins_to_expert() {
        // λ=1, B=0, identical histories: the feasible set is the singleton
        // {x^π_t}; any learned action must come back to the expert.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let inst = Instance::scalar_single_step(
                rng.random_range(0.0..10.0),
                &[rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)],
                0.2,
            )
            .unwrap();
            let robust = Robust { model: inst.cost_model() };
            let x_tildes =
                vec![vec![rng.random_range(-20.0..20.0)], vec![rng.random_range(-20.0..20.0)]];
            let (traj, expert) = robustify_actions(&inst, &robust, 1.0, 0.0, &x_tildes).unwrap();
            for t in 0..2 {
                assert!(
                    (traj.actions[t][0] - expert.actions[t][0]).abs() < 1e-9,
                    "t={} erl {} expert {}",
                    t,
                    traj.actions[t][0],
                    expert.actions[t][0]
                );
            }
        }
    }

    #[test]
    fn project_matches_grid_oracle() {
        // Brute-force feasible-grid argmin of ½(x − x̃)² as the reference.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = MemorySpec::single_step(1, 2.0);
        let m = model(0.2);
        for _ in 0..60 {
            let e0: f64 = rng.random_range(0.0..10.0);
            let h: f64 = rng.random_range(0.0..10.0);
            let y: f64 = rng.random_range(0.0..10.0);
            let cum: f64 = rng.random_range(0.0..3.0);
            let expert_cum = cum + 0.2 * (e0 - y).abs() + (e0 - h).abs() + 1.0;
            let history = vec![vec![h]];
            let window = vec![vec![e0], vec![h]];
            let yv = [y];
            let ctx = scalar_ctx(&m, &spec, &yv, &history, &window, cum, 2, 8);
            let budget = RobustBudget::new(1.4, 0.0, expert_cum).unwrap();
            let x_tilde = rng.random_range(-15.0..25.0);
            let r = project(&ctx, &[x_tilde], &budget).unwrap();

            let n = 200_001usize;
            let (lo, hi) = (-20.0, 30.0);
            let spacing = (hi - lo) / (n - 1) as f64;
            let mut best = f64::INFINITY;
            let mut best_x = f64::NAN;
            for i in 0..n {
                let x = lo + spacing * i as f64;
                if ctx.constraint_lhs(&[x]).unwrap() <= budget.rhs() {
                    let dist = (x - x_tilde).abs();
                    if dist < best {
                        best = dist;
                        best_x = x;
                    }
                }
            }
            assert!(
                (r.x[0] - best_x).abs() <= spacing,
                "proj {} vs grid {} (spacing {})",
                r.x[0],
                best_x,
                spacing
            );
            assert!(r.constraint_value <= BUDGET_TOL);
        }
    }

    #[test]
    fn project_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let spec = MemorySpec::single_step(1, 2.0);
        let m = model(0.5);
        for _ in 0..100 {
            let e0: f64 = rng.random_range(0.0..10.0);
            let h: f64 = rng.random_range(0.0..10.0);
            let y: f64 = rng.random_range(0.0..10.0);
            let expert_cum = 0.5 * (e0 - y).abs() + (e0 - h).abs() + 0.5;
            let history = vec![vec![h]];
            let window = vec![vec![e0], vec![h]];
            let yv = [y];
            let ctx = scalar_ctx(&m, &spec, &yv, &history, &window, 0.0, 2, 8);
            let budget = RobustBudget::new(1.2, 0.0, expert_cum).unwrap();
            let first = project(&ctx, &[rng.random_range(-20.0..20.0)], &budget).unwrap();
            let second = project(&ctx, &first.x, &budget).unwrap();
            assert_eq!(second.x, first.x);
            assert_eq!(second.mu, 0.0, "already feasible point must be interior");
        }
    }

    #[test]
    fn projection_contracts_toward_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let spec = MemorySpec::single_step(1, 2.0);
        let m = model(0.3);
        for _ in 0..50 {
            let e0: f64 = rng.random_range(0.0..10.0);
            let h: f64 = rng.random_range(0.0..10.0);
            let y: f64 = rng.random_range(0.0..10.0);
            let expert_cum = 0.3 * (e0 - y).abs() + (e0 - h).abs() + 2.0;
            let history = vec![vec![h]];
            let window = vec![vec![e0], vec![h]];
            let yv = [y];
            let ctx = scalar_ctx(&m, &spec, &yv, &history, &window, 0.0, 2, 8);
            let budget = RobustBudget::new(1.4, 1.0, expert_cum).unwrap();
            let x_tilde = rng.random_range(-25.0..25.0);
            let r = project(&ctx, &[x_tilde], &budget).unwrap();
            // Any feasible z must be at least as far from x̃.
            for _ in 0..50 {
                let z = rng.random_range(-25.0..25.0);
                if ctx.constraint_lhs(&[z]).unwrap() <= budget.rhs() {
                    assert!((r.x[0] - x_tilde).abs() <= (z - x_tilde).abs() + 1e-7);
                }
            }
        }
    }

    #[test]
    fn project_vector_path_matches_grid() {
        // d=2 projection cross-checked against a coarse feasible-grid argmin.
        let spec = MemorySpec::single_step(2, 2.0);
        let m = model(0.5);
        let history = vec![vec![0.0, 0.0]];
        let window = vec![vec![2.0, 1.0], vec![0.0, 0.0]];
        let y = [2.0, 1.0];
        let expert_cum = 5f64.sqrt() + 1.0;
        let ctx = StepContext {
            model: &m,
            spec: &spec,
            y: &y,
            history: &history,
            expert_window: &window,
            ledger_cum: 0.0,
            t: 2,
            horizon: 6,
        };
        let budget = RobustBudget::new(1.3, 0.0, expert_cum).unwrap();
        let x_tilde = [8.0, -3.0];
        let r = project(&ctx, &x_tilde, &budget).unwrap();
        assert!(r.constraint_value <= BUDGET_TOL);

        let n = 401;
        let (lo, hi) = (-6.0, 10.0);
        let spacing = (hi - lo) / (n - 1) as f64;
        let mut best = f64::INFINITY;
        let mut best_x = [f64::NAN; 2];
        for i in 0..n {
            for j in 0..n {
                let x = [lo + spacing * i as f64, lo + spacing * j as f64];
                if ctx.constraint_lhs(&x).unwrap() <= budget.rhs() {
                    let d2 = (x[0] - x_tilde[0]).powi(2) + (x[1] - x_tilde[1]).powi(2);
                    if d2 < best {
                        best = d2;
                        best_x = x;
                    }
                }
            }
        }
        let err = ((r.x[0] - best_x[0]).powi(2) + (r.x[1] - best_x[1]).powi(2)).sqrt();
        assert!(err <= 2.0 * spacing * 1.42, "err {err} vs spacing {spacing}");
    }

    #[test]
    fn infeasible_ledger_is_reported() {
        let spec = MemorySpec::single_step(1, 2.0);
        let m = model(0.2);
        let history = vec![vec![0.0]];
        let window = vec![vec![1.0], vec![0.0]];
        // Corrupted cumulative cost far above any budget.
        let ctx = scalar_ctx(&m, &spec, &[1.0], &history, &window, 1e6, 1, 4);
        let budget = RobustBudget::new(1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            project(&ctx, &[0.5], &budget),
            Err(Error::InfeasibleAtExpert { .. })
        ));
    }

    #[test]
    fn erl_follows_expert_given_expert_actions() {
        let inst = Instance::scalar_single_step(1.0, &[3.0, 0.5, 2.0, 2.5], 0.4).unwrap();
        let robust = Robust { model: inst.cost_model() };
        let trace = crate::experts::run_expert(&inst, &robust).unwrap();
        let (traj, expert) = robustify_actions(&inst, &robust, 1.4, 0.0, &trace.actions).unwrap();
        assert_eq!(traj.actions, expert.actions);
        assert_eq!(traj.ledger, expert.ledger);
    }

    #[test]
    fn erl_single_step_hand_solution() {
        // T=1, x0=0, y=5, α=0.5, λ=1.2, B=0, x̃=10.
        // Expert pays 5 (pure memory), so the budget is 6. On the right
        // flank LHS(x) = 0.5(x−5) + x + (x−5), so the boundary solves
        // 2.5x − 7.5 = 6, x = 5.4.
        let inst = Instance::scalar_single_step(0.0, &[5.0], 0.5).unwrap();
        let robust = Robust { model: inst.cost_model() };
        let (traj, _) = robustify_actions(&inst, &robust, 1.2, 0.0, &[vec![10.0]]).unwrap();
        assert!((traj.actions[0][0] - 5.4).abs() < 1e-9, "got {}", traj.actions[0][0]);
    }

    #[test]
    fn competitive_bound_holds_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for case in 0..300 {
            let t_len = 6;
            let spec = if case % 3 == 0 {
                MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap()
            } else {
                MemorySpec::single_step(1, 2.0)
            };
            let initial: Vec<Vec<f64>> =
                (0..spec.q()).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
            let contexts: Vec<Vec<f64>> =
                (0..t_len).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
            let inst = Instance::with_initial(initial, contexts, 0.2, spec).unwrap();
            let robust = Robust { model: inst.cost_model() };
            let lambda = [1.0, 1.2, 1.4, 2.0][case % 4];
            let slack_b = [0.0, 5.0][case % 2];
            let expert_ref = crate::experts::run_expert(&inst, &robust).unwrap();
            // Adversarial learned actions: −10x the expert's.
            let x_tildes: Vec<Vec<f64>> =
                expert_ref.actions.iter().map(|a| vec![-10.0 * a[0]]).collect();
            let (traj, expert) =
                robustify_actions(&inst, &robust, lambda, slack_b, &x_tildes).unwrap();
            assert!(
                traj.total_cost() <= lambda * expert.total_cost() + slack_b + 1e-7,
                "case {case}: {} vs {}",
                traj.total_cost(),
                lambda * expert.total_cost() + slack_b
            );
        }
    }

    #[test]
    fn expert_next_action_stays_feasible_along_rollout() {
        // The feasibility induction: after every step, the expert's next
        // action satisfies the next constraint; step() errors otherwise, so
        // completing the rollouts is the assertion.
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..100 {
            let spec = MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap();
            let initial: Vec<Vec<f64>> =
                (0..2).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
            let contexts: Vec<Vec<f64>> =
                (0..6).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
            let inst = Instance::with_initial(initial, contexts, 0.3, spec).unwrap();
            let robust = Robust { model: inst.cost_model() };
            let mut runner = ErlRunner::new(&inst, &robust, 1.2, 0.0).unwrap();
            for _ in 0..6 {
                let x = vec![rng.random_range(-30.0..30.0)];
                runner.step(&x).unwrap();
            }
        }
    }
}
