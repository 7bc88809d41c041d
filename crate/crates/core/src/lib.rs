//! Finite-blocklength bounds for the common-message broadcast channel with
//! feedback: capacity and dispersion solver, converse and achievability
//! evaluators, and Monte Carlo simulators for the feedback schemes.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod antisym;
pub mod channel;
pub mod converse;
pub mod curve;
pub mod error;
pub mod exec;
pub mod flf_sim;
pub mod oracle;
pub mod rcu;
pub mod stoch;
pub mod vlf;

pub use error::{Error, ErrorCategory, Result};
pub use exec::Execution;
