//! Shared stochastic machinery.

pub mod pmf;
pub mod rng;
pub mod special;
pub mod stabilization;
pub mod stats;

pub use pmf::IntPmf;
pub use rng::RngStream;
pub use special::{binary_entropy_nats, log_binomial, q_inv, q_tail};
