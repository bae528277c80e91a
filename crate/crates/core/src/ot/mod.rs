//! Phrase-to-phrase recalibration maps from optimal transport.
//!
//! The cost of sending phrase `k` to phrase `l` is the per-unit change in
//! ECE when every record using `k` is reassigned `l`'s distribution. The
//! plan is found with an entropic Sinkhorn iteration run on log-domain dual
//! potentials; row-normalizing it yields a stochastic phrase policy.

mod cost;
mod policy;
mod sinkhorn;

pub(crate) use cost::check_simplex;
pub use cost::{cost_matrix, cost_matrix_with, source_weights, CostMatrix};
pub use policy::{apply_policy, policy_from_plan, CalibrationPolicy, PolicyMode};
pub use sinkhorn::{solve_balanced, solve_unbalanced, OtConfig, TransportPlan};
