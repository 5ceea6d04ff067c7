//! Distributed Newton optimization for consensus problems, built on
//! Laplacian (SDD) solves, with ADMM, averaging and subgradient baselines
//! running on a message-counting network simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod consensus;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod newton;
pub mod problems;
pub mod sdd;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
