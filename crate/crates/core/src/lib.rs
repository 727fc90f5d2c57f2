//! Exact regret experiments on tabular episodic MDPs.
//!
//! The crate pairs an optimistic learner (Bernstein-bonus value iteration
//! with an optional Hoeffding baseline) with a dynamic-programming oracle
//! that knows the true model, so that every episode's regret, surpluses,
//! gaps, and clipped-decomposition bounds can be computed exactly and the
//! structural inequalities behind gap-dependent regret analysis can be
//! verified one episode at a time.
//!
//! Module map:
//! - [`mdp`]: the generative model, reward distributions, policies;
//! - [`oracle`]: exact values, gaps, variances, occupancies, clipping
//!   thresholds, and the brute-force cross-check;
//! - [`instances`]: hard-instance constructors and seeded random MDPs;
//! - [`learner`]: sufficient statistics, bonuses, planners, rollouts;
//! - [`diagnostics`]: per-episode theorem-instance checks and bound terms;
//! - [`simulator`]: seeded runs, sweeps, and their ledgers.

pub mod diagnostics;
pub mod instances;
pub mod learner;
pub mod mdp;
pub mod oracle;
pub mod simulator;

pub use instances::InstanceSpec;
pub use mdp::{Policy, RewardModel, TabularMDP};
pub use oracle::{clip, OracleTables};
pub use simulator::{run, sweep, RunConfig, RunLedger};
