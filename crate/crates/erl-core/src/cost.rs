//! Problem instances, hitting and memory costs, and cost accounting.
//!
//! One episode is `T` steps. At step `t` the agent sees a context `y_t`,
//! picks an action `x_t ∈ ℝ^d`, and pays a hitting cost `f(x_t, y_t)` plus a
//! memory cost `‖x_t − Σ_i C_i x_{t−i}‖_p` coupling the action to the last
//! `q` actions. Histories are passed newest-first: `history[0] = x_{t−1}`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp;
use crate::linalg::Matrix;
use crate::norms::{lp_hessian, lp_norm, lp_subgradient};

/// Memory-cost structure: length `q`, coefficient matrices `C_1..C_q`, norm order `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorySpec {
    coeffs: Vec<Matrix>,
    p: f64,
    dim: usize,
}

impl MemorySpec {
    /// Multi-step spec with the given coefficients, newest lag first.
    pub fn new(coeffs: Vec<Matrix>, p: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Empty("memory coefficients"));
        }
        if p < 1.0 {
            return Err(Error::InvalidParam(alloc::format!("norm order p={p} < 1")));
        }
        let dim = coeffs[0].rows();
        for c in &coeffs {
            if c.rows() != dim || c.cols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.rows() });
            }
        }
        Ok(Self { coeffs, p, dim })
    }

    /// Single-step spec `q = 1`, `C_1 = I`: memory cost `‖x_t − x_{t−1}‖_p`.
    pub fn single_step(dim: usize, p: f64) -> Self {
        Self { coeffs: vec![Matrix::identity(dim)], p, dim }
    }

    /// Scalar multi-step spec from plain coefficients (d = 1).
    pub fn scalar(coeffs: &[f64], p: f64) -> Result<Self> {
        Self::new(coeffs.iter().map(|&c| Matrix::scaled_identity(1, c)).collect(), p)
    }

    pub fn q(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Coefficient of lag `i` (1-based): `C_i`.
    pub fn coeff(&self, i: usize) -> &Matrix {
        &self.coeffs[i - 1]
    }

    pub fn coeffs(&self) -> &[Matrix] {
        &self.coeffs
    }

    /// `β = Σ_i ‖C_i‖`, induced by the `l_p` vector norm.
    pub fn beta(&self) -> f64 {
        self.coeffs.iter().map(|c| c.induced_norm(self.p)).sum()
    }

    /// `x − Σ_i C_i x_{t−i}` for a newest-first history window.
    pub fn deviation(&self, x: &[f64], history: &[Vec<f64>]) -> Result<Vec<f64>> {
        if history.len() != self.q() {
            return Err(Error::HistoryLength { expected: self.q(), got: history.len() });
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut z = x.to_vec();
        for (i, h) in history.iter().enumerate() {
            if h.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: h.len() });
            }
            let ci_h = self.coeffs[i].matvec(h);
            for (zj, vj) in z.iter_mut().zip(ci_h) {
                *zj -= vj;
            }
        }
        Ok(z)
    }
}

/// Hitting-cost model: value, unique minimizer, subgradient, and Hessian.
pub trait HittingCost {
    fn value(&self, x: &[f64], y: &[f64]) -> Result<f64>;

    /// The unique minimizer of `f(·, y)`, if the model has one.
    fn minimizer(&self, y: &[f64]) -> Result<Vec<f64>>;

    fn subgradient(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>>;

    /// Hessian of `f(·, y)` at `x`; zero where the model is locally linear.
    fn hessian(&self, x: &[f64], y: &[f64]) -> Result<Matrix>;

    /// Growth rate: `f(x, y) − f(x*, y) ≥ alpha·‖x − x*‖`.
    fn alpha(&self) -> f64;
}

/// The built-in sharp cost `f(x, y) = α‖x − y‖_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralCost {
    pub alpha: f64,
    pub p: f64,
}

impl PolyhedralCost {
    pub fn new(alpha: f64, p: f64) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(Error::InvalidParam(alloc::format!("alpha={alpha} must be > 0")));
        }
        if p < 1.0 {
            return Err(Error::InvalidParam(alloc::format!("norm order p={p} < 1")));
        }
        Ok(Self { alpha, p })
    }

    fn diff(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: x.len() });
        }
        Ok(x.iter().zip(y).map(|(a, b)| a - b).collect())
    }
}

impl HittingCost for PolyhedralCost {
    fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.alpha * lp_norm(&Self::diff(x, y)?, self.p))
    }

    fn minimizer(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(y.to_vec())
    }

    fn subgradient(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut g = lp_subgradient(&Self::diff(x, y)?, self.p);
        for gi in g.iter_mut() {
            *gi *= self.alpha;
        }
        Ok(g)
    }

    fn hessian(&self, x: &[f64], y: &[f64]) -> Result<Matrix> {
        let mut h = lp_hessian(&Self::diff(x, y)?, self.p);
        h.scale(self.alpha);
        Ok(h)
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// `α‖x − y‖_p`.
pub fn hitting_cost(x: &[f64], y: &[f64], alpha: f64, p: f64) -> Result<f64> {
    PolyhedralCost::new(alpha, p)?.value(x, y)
}

/// `‖x − Σ_i C_i·history[i−1]‖_p` for a newest-first history of length `q`.
pub fn memory_cost(x: &[f64], history: &[Vec<f64>], spec: &MemorySpec) -> Result<f64> {
    Ok(lp_norm(&spec.deviation(x, history)?, spec.p()))
}

/// One problem episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct Instance {
    /// Initial actions, newest-first: `[x_0, x_{−1}, …, x_{−q+1}]`.
    initial: Vec<Vec<f64>>,
    contexts: Vec<Vec<f64>>,
    alpha: f64,
    memory: MemorySpec,
}

impl Instance {
    /// Single-initial-action constructor; requires `q = 1` or pads by
    /// repeating `x0` for older lags.
    pub fn new(
        x0: Vec<f64>,
        contexts: Vec<Vec<f64>>,
        alpha: f64,
        memory: MemorySpec,
    ) -> Result<Self> {
        let q = memory.q();
        let initial = vec![x0; q];
        Self::with_initial(initial, contexts, alpha, memory)
    }

    /// Full constructor with all `q` initial actions, newest-first.
    pub fn with_initial(
        initial: Vec<Vec<f64>>,
        contexts: Vec<Vec<f64>>,
        alpha: f64,
        memory: MemorySpec,
    ) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::Empty("contexts"));
        }
        if alpha <= 0.0 {
            return Err(Error::InvalidParam(alloc::format!("alpha={alpha} must be > 0")));
        }
        if initial.len() != memory.q() {
            return Err(Error::HistoryLength { expected: memory.q(), got: initial.len() });
        }
        let d = memory.dim();
        for a in &initial {
            if a.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: a.len() });
            }
        }
        let m = contexts[0].len();
        for y in &contexts {
            if y.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: y.len() });
            }
        }
        // The built-in cost α‖x − y‖ needs actions and contexts in one space.
        if m != d {
            return Err(Error::DimensionMismatch { expected: d, got: m });
        }
        Ok(Self { initial, contexts, alpha, memory })
    }

    /// Convenience constructor for scalar single-step episodes.
    pub fn scalar_single_step(x0: f64, contexts: &[f64], alpha: f64) -> Result<Self> {
        Self::new(
            vec![x0],
            contexts.iter().map(|&y| vec![y]).collect(),
            alpha,
            MemorySpec::single_step(1, 2.0),
        )
    }

    pub fn horizon(&self) -> usize {
        self.contexts.len()
    }

    pub fn dim(&self) -> usize {
        self.memory.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn memory(&self) -> &MemorySpec {
        &self.memory
    }

    pub fn cost_model(&self) -> PolyhedralCost {
        PolyhedralCost { alpha: self.alpha, p: self.memory.p() }
    }

    /// Context of step `t` (1-based).
    pub fn context(&self, t: usize) -> Result<&[f64]> {
        if t < 1 || t > self.horizon() {
            return Err(Error::StepOutOfRange { t, horizon: self.horizon() });
        }
        Ok(&self.contexts[t - 1])
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }

    /// Initial actions, newest-first.
    pub fn initial(&self) -> &[Vec<f64>] {
        &self.initial
    }

    pub fn x0(&self) -> &[f64] {
        &self.initial[0]
    }

    /// Newest-first history window `[x_{t−1}, …, x_{t−q}]` for step `t`,
    /// given the episode's realized actions `actions[0..t−1]`.
    pub fn history_at(&self, t: usize, actions: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let q = self.memory.q();
        let mut window = Vec::with_capacity(q);
        for lag in 1..=q {
            let idx = t as isize - lag as isize; // step index of x_{t−lag}
            if idx >= 1 {
                window.push(actions[idx as usize - 1].clone());
            } else {
                // x_0, x_{−1}, … come from the instance initials.
                window.push(self.initial[(-idx) as usize].clone());
            }
        }
        window
    }

    /// Hitting and memory cost of playing `x` at step `t` with the given
    /// newest-first history.
    pub fn step_cost(&self, t: usize, x: &[f64], history: &[Vec<f64>]) -> Result<(f64, f64)> {
        let y = self.context(t)?;
        let hit = self.cost_model().value(x, y)?;
        let mem = memory_cost(x, history, &self.memory)?;
        Ok((hit, mem))
    }

    /// Total cost of an action sequence `x_1..x_T`.
    pub fn total_cost(&self, actions: &[Vec<f64>]) -> Result<f64> {
        if actions.len() != self.horizon() {
            return Err(Error::DimensionMismatch {
                expected: self.horizon(),
                got: actions.len(),
            });
        }
        let mut total = 0.0;
        for t in 1..=self.horizon() {
            let history = self.history_at(t, actions);
            let (hit, mem) = self.step_cost(t, &actions[t - 1], &history)?;
            total += hit + mem;
        }
        Ok(total)
    }

    /// Evaluate a full action sequence into a [`Trajectory`] with its ledger.
    pub fn evaluate(&self, actions: Vec<Vec<f64>>) -> Result<Trajectory> {
        if actions.len() != self.horizon() {
            return Err(Error::DimensionMismatch {
                expected: self.horizon(),
                got: actions.len(),
            });
        }
        let mut ledger = CostLedger::new();
        for t in 1..=self.horizon() {
            let history = self.history_at(t, &actions[..t - 1]);
            let (hit, mem) = self.step_cost(t, &actions[t - 1], &history)?;
            ledger.push(hit, mem, actions[t - 1].clone());
        }
        Ok(Trajectory { actions, ledger })
    }

    /// Hull of all contexts, initial actions included; used by grid oracles.
    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for y in &self.contexts {
            for &v in y {
                lo = fp::min(lo, v);
                hi = fp::max(hi, v);
            }
        }
        for a in &self.initial {
            for &v in a {
                lo = fp::min(lo, v);
                hi = fp::max(hi, v);
            }
        }
        (lo, hi)
    }
}

/// Per-step cost records and running totals for one trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    hit: Vec<f64>,
    mem: Vec<f64>,
    cum: Vec<f64>,
    actions: Vec<Vec<f64>>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append one step; maintains `cum[t] = cum[t−1] + hit[t] + mem[t]`.
    pub fn push(&mut self, hit: f64, mem: f64, action: Vec<f64>) {
        let prev = self.cum.last().copied().unwrap_or(0.0);
        self.hit.push(hit);
        self.mem.push(mem);
        self.cum.push(prev + hit + mem);
        self.actions.push(action);
    }

    pub fn steps(&self) -> usize {
        self.cum.len()
    }

    /// Cumulative cost after the last recorded step (0 before any step).
    pub fn cum(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    /// Cumulative cost after step `t` (1-based); `cum_at(0) = 0`.
    pub fn cum_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.cum[t - 1]
        }
    }

    pub fn hit(&self) -> &[f64] {
        &self.hit
    }

    pub fn mem(&self) -> &[f64] {
        &self.mem
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }
}

/// A full action sequence together with its cost ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub actions: Vec<Vec<f64>>,
    pub ledger: CostLedger,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.ledger.cum()
    }
}

// JSON schema: {x0, x0_prev?, contexts, alpha, p, memory: {q, coeffs}}.
// `x0_prev` carries the older initial actions and is omitted when q = 1.

#[derive(Serialize, Deserialize)]
struct MemoryRepr {
    q: usize,
    coeffs: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0_prev: Option<Vec<Vec<f64>>>,
    contexts: Vec<Vec<f64>>,
    alpha: f64,
    p: f64,
    memory: MemoryRepr,
}

impl From<Instance> for InstanceRepr {
    fn from(inst: Instance) -> Self {
        let p = inst.memory.p();
        let coeffs = inst.memory.coeffs.iter().cloned().map(Vec::<Vec<f64>>::from).collect();
        let q = inst.memory.q();
        let mut initial = inst.initial;
        let x0 = initial.remove(0);
        let x0_prev = if initial.is_empty() { None } else { Some(initial) };
        InstanceRepr {
            x0,
            x0_prev,
            contexts: inst.contexts,
            alpha: inst.alpha,
            p,
            memory: MemoryRepr { q, coeffs },
        }
    }
}

impl TryFrom<InstanceRepr> for Instance {
    type Error = Error;
    fn try_from(r: InstanceRepr) -> Result<Self> {
        if r.memory.coeffs.len() != r.memory.q {
            return Err(Error::HistoryLength {
                expected: r.memory.q,
                got: r.memory.coeffs.len(),
            });
        }
        let coeffs: Result<Vec<Matrix>> =
            r.memory.coeffs.into_iter().map(Matrix::try_from).collect();
        let memory = MemorySpec::new(coeffs?, r.p)?;
        let mut initial = vec![r.x0];
        if let Some(prev) = r.x0_prev {
            initial.extend(prev);
        }
        if initial.len() == 1 && memory.q() > 1 {
            let x0 = initial[0].clone();
            initial.resize(memory.q(), x0);
        }
        Instance::with_initial(initial, r.contexts, r.alpha, memory)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Vec<f64> {
        vec![v]
    }

    #[test]
    fn hitting_cost_examples() {
        // Minimizer case.
        assert_eq!(hitting_cost(&[1.5, 2.0], &[1.5, 2.0], 0.2, 2.0).unwrap(), 0.0);
        // 0.2·|3−1| = 0.4.
        assert!((hitting_cost(&[3.0], &[1.0], 0.2, 2.0).unwrap() - 0.4).abs() < 1e-15);
        // 3-4-5 triangle.
        assert_eq!(hitting_cost(&[3.0, 4.0], &[0.0, 0.0], 1.0, 2.0).unwrap(), 5.0);
    }

    #[test]
    fn hitting_cost_dimension_mismatch() {
        assert!(matches!(
            hitting_cost(&[1.0, 2.0], &[1.0], 1.0, 2.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn memory_cost_single_step() {
        let spec = MemorySpec::single_step(1, 2.0);
        // No movement.
        assert_eq!(memory_cost(&[2.0], &[scalar(2.0)], &spec).unwrap(), 0.0);
        // ‖5 − 2‖ = 3.
        assert_eq!(memory_cost(&[5.0], &[scalar(2.0)], &spec).unwrap(), 3.0);
    }

    #[test]
    fn memory_cost_acceleration_smoothing() {
        // ‖x_t − 2x_{t−1} + x_{t−2}‖ is realized by C_1 = 2I, C_2 = −I in
        // the stored form ‖x − Σ C_i x_{t−i}‖: |3 − (2·2 − 1·1)| = 0.
        let accel = MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap();
        let hist = vec![scalar(2.0), scalar(1.0)];
        assert_eq!(memory_cost(&[3.0], &hist, &accel).unwrap(), 0.0);

        // The literal coefficients C_1 = −2I, C_2 = I expand differently:
        // |3 − (−2·2 + 1·1)| = |3 + 3| = 6.
        let literal = MemorySpec::scalar(&[-2.0, 1.0], 2.0).unwrap();
        assert_eq!(memory_cost(&[3.0], &hist, &literal).unwrap(), 6.0);
    }

    #[test]
    fn memory_cost_wrong_history_length() {
        let spec = MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap();
        assert!(matches!(
            memory_cost(&[1.0], &[scalar(0.0)], &spec),
            Err(Error::HistoryLength { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn beta_single_step_is_one() {
        let spec = MemorySpec::single_step(3, 2.0);
        assert!((spec.beta() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_acceleration_is_three() {
        let spec = MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap();
        assert!((spec.beta() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn step_cost_examples() {
        let inst = Instance::scalar_single_step(0.0, &[10.0], 0.2).unwrap();
        let h = inst.history_at(1, &[]);
        // Play the context: no hit, full move.
        assert_eq!(inst.step_cost(1, &[10.0], &h).unwrap(), (0.0, 10.0));
        // Stay put: 0.2·10 hit, no move.
        assert_eq!(inst.step_cost(1, &[0.0], &h).unwrap(), (2.0, 0.0));
        // t = 1 with x = x0 = y_1 would be (0, 0).
        let same = Instance::scalar_single_step(3.0, &[3.0], 0.2).unwrap();
        let h = same.history_at(1, &[]);
        assert_eq!(same.step_cost(1, &[3.0], &h).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn step_cost_out_of_range() {
        let inst = Instance::scalar_single_step(0.0, &[10.0], 0.2).unwrap();
        assert!(matches!(
            inst.step_cost(2, &[0.0], &[scalar(0.0)]),
            Err(Error::StepOutOfRange { t: 2, horizon: 1 })
        ));
    }

    #[test]
    fn total_cost_hand_example() {
        // T=2, x0=0, y=(1,1), actions (1,1), α=0.2: memory 1 at t=1, else 0.
        let inst = Instance::scalar_single_step(0.0, &[1.0, 1.0], 0.2).unwrap();
        let total = inst.total_cost(&[scalar(1.0), scalar(1.0)]).unwrap();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn total_cost_stays_zero_on_constant_path() {
        let inst = Instance::scalar_single_step(4.0, &[4.0, 4.0, 4.0], 0.2).unwrap();
        assert_eq!(inst.total_cost(&[scalar(4.0), scalar(4.0), scalar(4.0)]).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_matches_total_cost() {
        let inst = Instance::scalar_single_step(0.5, &[1.0, -2.0, 0.25], 0.7).unwrap();
        let actions = vec![scalar(0.9), scalar(-1.0), scalar(0.0)];
        let traj = inst.evaluate(actions.clone()).unwrap();
        let total = inst.total_cost(&actions).unwrap();
        assert!((traj.total_cost() - total).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_is_deterministic() {
        let inst = Instance::with_initial(
            vec![scalar(1.0), scalar(0.5)],
            vec![scalar(2.0), scalar(3.0)],
            0.2,
            MemorySpec::scalar(&[2.0, -1.0], 2.0).unwrap(),
        )
        .unwrap();
        let s1 = serde_json::to_string(&inst).unwrap();
        let back: Instance = serde_json::from_str(&s1).unwrap();
        assert_eq!(back, inst);
        let s2 = serde_json::to_string(&back).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn json_schema_field_names() {
        let inst = Instance::scalar_single_step(1.0, &[2.0], 0.2).unwrap();
        let v: serde_json::Value = serde_json::to_value(&inst).unwrap();
        assert!(v.get("x0").is_some());
        assert!(v.get("contexts").is_some());
        assert!(v.get("alpha").is_some());
        assert!(v.get("p").is_some());
        assert_eq!(v["memory"]["q"], 1);
        assert!(v.get("x0_prev").is_none(), "q=1 must not emit x0_prev");
    }

    proptest! {
        #[test]
        fn costs_are_nonnegative(
            x in proptest::collection::vec(-50.0f64..50.0, 2),
            y in proptest::collection::vec(-50.0f64..50.0, 2),
            h1 in proptest::collection::vec(-50.0f64..50.0, 2),
            alpha in 0.01f64..5.0,
        ) {
            let spec = MemorySpec::single_step(2, 2.0);
            prop_assert!(hitting_cost(&x, &y, alpha, 2.0).unwrap() >= 0.0);
            prop_assert!(memory_cost(&x, &[h1], &spec).unwrap() >= 0.0);
        }

        #[test]
        fn memory_triangle_consistency(
            x in proptest::collection::vec(-20.0f64..20.0, 2),
            z in proptest::collection::vec(-20.0f64..20.0, 2),
            h1 in proptest::collection::vec(-20.0f64..20.0, 2),
            h2 in proptest::collection::vec(-20.0f64..20.0, 2),
        ) {
            // d(x, h) ≤ d(z, h) + ‖x − z‖, the workhorse of feasibility proofs.
            let spec = MemorySpec::new(
                vec![Matrix::scaled_identity(2, 2.0), Matrix::scaled_identity(2, -1.0)],
                2.0,
            ).unwrap();
            let hist = vec![h1, h2];
            let dx = memory_cost(&x, &hist, &spec).unwrap();
            let dz = memory_cost(&z, &hist, &spec).unwrap();
            let gap = lp_norm(&crate::linalg::sub(&x, &z), 2.0);
            prop_assert!(dx <= dz + gap + 1e-9);
        }

        #[test]
        fn alpha_polyhedral_witness(
            x in proptest::collection::vec(-20.0f64..20.0, 2),
            y in proptest::collection::vec(-20.0f64..20.0, 2),
            alpha in 0.01f64..5.0,
        ) {
            // f(x,y) − f(y,y) ≥ α‖x − y‖ holds with equality for the built-in.
            let model = PolyhedralCost::new(alpha, 2.0).unwrap();
            let lhs = model.value(&x, &y).unwrap() - model.value(&y, &y).unwrap();
            let rhs = alpha * lp_norm(&crate::linalg::sub(&x, &y), 2.0);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn ledger_identity(
            hits in proptest::collection::vec(0.0f64..10.0, 1..20),
            mems in proptest::collection::vec(0.0f64..10.0, 1..20),
        ) {
            let n = hits.len().min(mems.len());
            let mut ledger = CostLedger::new();
            for i in 0..n {
                ledger.push(hits[i], mems[i], vec![0.0]);
            }
            for t in 1..=n {
                let delta = ledger.cum_at(t) - ledger.cum_at(t - 1);
                prop_assert!((delta - (hits[t-1] + mems[t-1])).abs() < 1e-12);
            }
        }

        #[test]
        fn total_cost_matches_resummation(
            x0 in -10.0f64..10.0,
            ys in proptest::collection::vec(-10.0f64..10.0, 1..12),
            acts in proptest::collection::vec(-10.0f64..10.0, 12),
            alpha in 0.05f64..3.0,
        ) {
            let inst = Instance::scalar_single_step(x0, &ys, alpha).unwrap();
            let t = inst.horizon();
            let actions: Vec<Vec<f64>> = acts[..t].iter().map(|&a| vec![a]).collect();
            let total = inst.total_cost(&actions).unwrap();
            // Independent re-summation with explicit scalar arithmetic.
            let mut expect = 0.0;
            let mut prev = x0;
            for (i, &y) in ys.iter().enumerate() {
                let a = acts[i];
                expect += alpha * (a - y).abs() + (a - prev).abs();
                prev = a;
            }
            prop_assert!((total - expect).abs() < 1e-9);
        }
    }
}
