//! Expert-robustified learning (ERL) for online optimization with memory costs.
//!
//! An agent picks an action `x_t` after seeing a context `y_t`, paying a
//! hitting cost `f(x_t, y_t)` plus a memory cost coupling `x_t` to the last
//! `q` actions. Expert online algorithms (`Robust`, `Greedy`) give worst-case
//! guarantees but mediocre average cost; a learned recurrent policy gives good
//! average cost but no guarantees. ERL projects each policy action onto a
//! budget set anchored to the expert's running cost, which makes the combined
//! algorithm provably λ-competitive against the expert while the policy is
//! trained end-to-end *through* the projection via its KKT gradients.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI, and parallel
//! drivers live in the companion `erl-cli` crate.
//!
//! Module map:
//! - [`cost`]: problem instances, hitting/memory costs, ledgers.
//! - [`experts`]: expert rules, offline optima, competitive-ratio auditing.
//! - [`robustify`]: reservation cost, budget constraint, projection, rollout.
//! - [`policy`]: the recurrent cell, projection gradients, BPTT.
//! - [`trainer`]: end-to-end and standalone training loops.
//! - [`energy`]: the energy-scheduling workload and synthetic traces.
//! - [`bench`]: baseline runner, normalized costs, histograms.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bench;
pub mod cost;
pub mod energy;
pub mod error;
pub mod experts;
pub mod linalg;
pub mod norms;
pub mod policy;
pub mod robustify;
pub mod trainer;

pub(crate) mod fp;

pub use error::{Error, Result};
