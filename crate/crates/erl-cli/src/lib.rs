//! Command-line front end for the expert-robustified learning library:
//! synthetic data generation, training, benchmarking, a single-step
//! projection inspector, and robustness audits.

pub mod commands;
pub mod io;

use std::fmt;

/// Error carrying a broken mathematical guarantee; maps to exit code 3.
#[derive(Debug)]
pub struct InvariantViolation(pub String);

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant violation: {}", self.0)
    }
}

impl std::error::Error for InvariantViolation {}

/// Exit code for a failed run: 3 for invariant violations, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<InvariantViolation>().is_some() {
            return 3;
        }
        if let Some(core) = cause.downcast_ref::<erl_core::Error>() {
            if matches!(
                core,
                erl_core::Error::InfeasibleAtExpert { .. }
                    | erl_core::Error::RobustnessViolated { .. }
            ) {
                return 3;
            }
        }
    }
    2
}
