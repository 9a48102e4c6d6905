//! Randomized least-squares value iteration with perturbed-history
//! exploration (LSVI-PHE) for episodic reinforcement learning.
//!
//! The crate is organized bottom-up:
//!
//! - [`mdp`]: finite episodic MDPs, exact dynamic-programming oracles and
//!   regret bookkeeping.
//! - [`env`]: RiverSwim and DeepSea builders plus the one-hot feature map.
//! - [`perturbed`]: incremental ridge regression and the two Gaussian
//!   perturbation samplers.
//! - [`agents`]: linear LSVI-PHE, RLSVI, LSVI-UCB and ε-greedy planners.
//! - [`gfa`]: the general function approximation variant over a pluggable
//!   regression oracle.
//! - [`harness`]: configuration-driven experiment runner, CSV and SVG output.

pub mod agents;
pub mod env;
pub mod error;
pub mod gfa;
pub mod harness;
pub mod mdp;
pub mod perturbed;
pub mod rng;

pub use error::{Error, Result};
