//! Residual-driven adaptive collocation for physics-informed neural networks.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
#[cfg(feature = "cli")]
pub mod cli;
pub mod errormap;
pub mod network;
pub mod pinn;
pub mod problems;
pub mod rng;
pub mod sampling;
