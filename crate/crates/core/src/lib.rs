//! Option-based policy transfer among cooperating PPO learners.
//!
//! Each agent learns with its own PPO actor-critic. An option advisor treats
//! every other agent's policy as an option, learns which one is worth
//! imitating and when to stop, and injects a decaying cross-entropy term into
//! the agent's actor loss. Three advisors are provided:
//!
//! - [`advisors::Goa`]: joint option values over the global state.
//! - [`advisors::Loa`]: per-option values over local observations.
//! - [`advisors::Sro`]: option values factored into a successor
//!   representation and linear reward weights, one weight vector per agent
//!   when rewards disagree.
//!
//! The [`harness`] module wires advisors, learners and [`envs`] together and
//! provides the CLI, metrics files and brute-force oracles.

pub mod advisors;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nnkernel;
pub mod optioncore;
pub mod rlcore;

pub use error::{Error, Result};
