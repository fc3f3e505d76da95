//! Exact finite-truncation analysis of the queueing chain.
//!
//! The chain lives on per-cell agent counts with a cap per cell; arrivals at
//! a full cell are rejected so the truncated generator stays conservative.
//! On top of the stationary solve sit exact throughput, tagged-agent virtual
//! waits (absorbing solves), and the one-dimensional birth-death machinery
//! for the queue-1 first-passage comparison.

mod chain;
mod full_info;
mod linalg;
mod passage;
mod space;
mod waits;

pub use chain::{
    build_chain, build_chain_with, exact_throughput, poisson_truncation_cap, solve_chain_adaptive,
    stationary, stationary_with, throughput_given, AdaptiveOptions, ChainOptions, SolvedChain,
    StationaryDist, TruncatedChain,
};
pub use full_info::full_info_throughput;
pub use linalg::{Csr, SolveReport};
pub use passage::{
    birth_death_product_form, birth_death_stationary_solver, erlang_a_rates,
    solve_birth_death_passage, yc_wait_gap, BirthDeathSpec, YcWaitGap,
};
pub use space::StateSpace;
pub use waits::{virtual_wait_table, wait_table_given, WaitTable};
