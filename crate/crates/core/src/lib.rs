//! Posterior Cramér-Rao bounds for nonlinear filtering when the process and
//! measurement noises are auto- and cross-correlated over a finite number of
//! steps.
//!
//! The core entry point is [`recursion::run`], which propagates the filtering
//! information matrix `J_k` through a model implementing
//! [`noise::SystemModel`]. [`oracle`] recomputes the same quantity from the
//! full joint information matrix for checking.

pub mod baselines;
pub mod blocks;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod oracle;
pub mod recursion;
pub mod selection;

pub use error::{PcrbError, Result};
