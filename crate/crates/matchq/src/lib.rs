//! Strategic matching queues.
//!
//! Agents of one flexible and `ell` specialized types arrive over time, wait in
//! priority queues, and abandon at an exponential rate; jobs arrive and are
//! dispatched through the queues by a policy (NCR, ACR, or RCR). Agents choose
//! which queue to join to minimize their expected wait, which turns the dispatch
//! policy into a queue-joining game.
//!
//! The crate provides:
//!
//! - [`model`]: domain types, policy constructors, and the single-job dispatch
//!   semantics shared by every solver and the simulator;
//! - [`ctmc`]: exact finite-truncation analysis: stationary distributions,
//!   throughput, tagged-agent virtual waits, and birth-death first-passage
//!   solves;
//! - [`sim`]: a discrete-event engine with common-random-number coupling;
//! - [`equilibrium`]: Nash-equilibrium solvers over queue-joining strategies;
//! - [`experiments`]: scripted parameter sweeps and property suites with CSV
//!   output and run manifests.

pub mod ctmc;
pub mod equilibrium;
mod error;
pub mod experiments;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
