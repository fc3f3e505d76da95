//! Domain types, policy constructors, and the single-job dispatch semantics.
//!
//! Everything downstream: the exact chain solvers, the equilibrium solvers,
//! and the event-driven simulator: resolves job dispatches through
//! [`resolve_dispatch`] (or its tagged-agent variant), so the dispatch rules
//! live here exactly once.

mod dispatch;
mod full_info;
mod params;
mod policy;
mod state;
mod strategy;

pub(crate) use dispatch::{dispatch_sets, for_each_dispatch_outcome, DispatchSet};
pub use dispatch::{
    resolve_dispatch, DispatchDistribution, DispatchResult, DispatchTarget, SetEval,
};
pub use full_info::{full_info_policy_table, FullInfoKind, FullInfoTable};
pub use params::{MarketParams, PatienceModel};
pub use policy::{make_acr, make_ncr, make_rcr, PolicyKind, PolicySelector, PolicySpec};
pub use state::SystemState;
pub use strategy::StrategyProfile;

/// A type `i` agent can serve a type `j` job iff the agent is flexible
/// (type 0) or the types coincide.
pub fn compatible(agent_type: usize, job_type: usize) -> bool {
    agent_type == 0 || agent_type == job_type
}
