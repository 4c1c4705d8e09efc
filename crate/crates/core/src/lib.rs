//! Off-policy evaluation for Markov decision processes with iid unmeasured
//! confounders.
//!
//! The pipeline has three stages:
//!
//! 1. a posterior oracle `φ(u | s, a, s')` over the hidden confounder
//!    ([`confounding`]);
//! 2. the stationary state density ratio `d(s)` between the evaluation and
//!    behavior policies, fit by an iterated kernel minimax GMM
//!    ([`density_ratio`]);
//! 3. weights that minimize the worst-case conditional bias plus variance over
//!    a kernel ball, solved in closed form ([`balancing`]).
//!
//! [`estimators`] turns these into policy-value estimates alongside the
//! direct-method, doubly-robust and IPS baselines, and [`harness`] reproduces
//! the ModelWin and GridWorld benchmark sweeps.

pub mod env;
pub mod linalg;
pub mod confounding;
pub mod density_ratio;
pub mod balancing;
pub mod seed;
pub mod estimators;
pub mod io;
pub mod harness;
