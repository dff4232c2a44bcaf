//! Control barrier functions for unicycle-type systems with learned
//! feasibility constraints that keep the per-step quadratic program solvable.

pub mod certificates;
pub mod config;
pub mod dynamics;
pub mod learner;
pub mod presets;
pub mod qp;
pub mod scenarios;
