//! Error type shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the cost model, solvers, and training loops.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("history holds {got} actions but the memory spec needs {expected}")]
    HistoryLength { expected: usize, got: usize },

    #[error("step {t} out of range 1..={horizon}")]
    StepOutOfRange { t: usize, horizon: usize },

    #[error("cost model does not expose a unique minimizer")]
    NoUniqueMinimizer,

    #[error("solver stopped after {iterations} iterations without meeting its target")]
    NonConvergence { iterations: usize, best: Vec<f64> },

    #[error("operation supports scalar actions only, got d={d}")]
    ScalarOnly { d: usize },

    #[error("grid state budget exceeded: {states} states")]
    GridBudget { states: u128 },

    #[error("expert action violates the robustness constraint by {violation:e}; upstream ledger is corrupt")]
    InfeasibleAtExpert { violation: f64 },

    #[error("projection gradient unavailable at step {step}")]
    GradientUnavailable { step: usize },

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("training diverged at epoch {epoch}: loss {loss} vs initial {initial}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("robustness bound violated: cost {cost} exceeds {bound}")]
    RobustnessViolated { cost: f64, bound: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T> = core::result::Result<T, Error>;
