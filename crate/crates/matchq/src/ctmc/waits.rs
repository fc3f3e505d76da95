//! Tagged-agent virtual waiting times via absorbing-chain solves.

use super::chain::{
    assemble_tagged, build_chain, stationary, ChainOptions, SolvedChain, TruncatedChain,
};
use super::linalg::solve;
use crate::model::{compatible, MarketParams, PolicySpec, StrategyProfile};
use crate::Result;

/// Expected virtual waits `E[W_iq]` per (agent type, queue); `None` marks an
/// infinite wait (no job type ever dispatches to that queue for that agent).
#[derive(Debug, Clone, PartialEq)]
pub struct WaitTable {
    queues: Vec<usize>,
    waits: Vec<Vec<Option<f64>>>,
}

impl WaitTable {
    /// Assemble a table directly (rows indexed by agent type, columns by the
    /// queue list; `None` marks an infinite wait).
    pub fn from_rows(queues: Vec<usize>, waits: Vec<Vec<Option<f64>>>) -> crate::Result<Self> {
        if waits.iter().any(|r| r.len() != queues.len()) {
            return Err(crate::Error::InvalidInput(
                "wait rows must match the queue list".into(),
            ));
        }
        if waits.iter().flatten().flatten().any(|w| *w < 0.0) {
            return Err(crate::Error::InvalidInput(
                "finite waits must be nonnegative".into(),
            ));
        }
        Ok(Self { queues, waits })
    }

    pub fn queues(&self) -> &[usize] {
        &self.queues
    }

    /// `None` is the explicit infinity marker.
    pub fn wait(&self, agent_type: usize, queue: usize) -> Option<f64> {
        let col = self
            .queues
            .iter()
            .position(|&q| q == queue)
            .unwrap_or_else(|| panic!("queue {queue} not in table"));
        self.waits[agent_type][col]
    }

    pub fn row(&self, agent_type: usize) -> &[Option<f64>] {
        &self.waits[agent_type]
    }

    pub fn num_types(&self) -> usize {
        self.waits.len()
    }

    /// Smallest finite wait in a row, if any.
    pub fn row_min(&self, agent_type: usize) -> Option<f64> {
        self.waits[agent_type]
            .iter()
            .flatten()
            .copied()
            .fold(None, |m: Option<f64>, w| Some(m.map_or(w, |m| m.min(w))))
    }
}

/// Can a tagged type `i` agent in queue `q` ever be matched? True iff some
/// compatible job type lists `q` in its priority walk.
fn reachable(policy: &PolicySpec, params: &MarketParams, agent_type: usize, queue: usize) -> bool {
    (0..params.num_types()).any(|j| {
        compatible(agent_type, j)
            && policy
                .rho(j)
                .map(|rho| rho.contains(&queue))
                .unwrap_or(false)
    })
}

impl SolvedChain {
    /// Expected time until a tagged, never-abandoning type `i` agent placed
    /// in `queue` is matched, averaged over the stationary state it sees on
    /// arrival. `None` when no dispatch can ever reach it.
    pub fn wait(&self, agent_type: usize, queue: usize) -> Result<Option<f64>> {
        self.wait_with(agent_type, queue, &ChainOptions::default())
    }

    pub fn wait_with(
        &self,
        agent_type: usize,
        queue: usize,
        opts: &ChainOptions,
    ) -> Result<Option<f64>> {
        wait_single(&self.chain, self.dist.probs(), agent_type, queue, opts)
    }
}

pub(crate) fn wait_single(
    chain: &TruncatedChain,
    pi: &[f64],
    agent_type: usize,
    queue: usize,
    opts: &ChainOptions,
) -> Result<Option<f64>> {
    if !reachable(chain.policy(), chain.params(), agent_type, queue) {
        return Ok(None);
    }
    let a = assemble_tagged(chain, (agent_type, queue))?;
    let b = vec![1.0; a.n];
    let (h, _rep) = solve(&a, &b, None, opts.solver_tol, "virtual wait solve")?;
    Ok(Some(pi.iter().zip(&h).map(|(p, hh)| p * hh).sum::<f64>()))
}

/// Compute the full wait table at a uniform per-cell cap.
pub fn virtual_wait_table(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    cap: u64,
) -> Result<WaitTable> {
    let chain = build_chain(params, policy, sigma, cap)?;
    let dist = stationary(&chain)?;
    wait_table_given(&SolvedChain { chain, dist }, &ChainOptions::default())
}

pub fn wait_table_given(solved: &SolvedChain, opts: &ChainOptions) -> Result<WaitTable> {
    let params = solved.chain.params();
    let policy = solved.chain.policy();
    let mut waits = Vec::with_capacity(params.num_types());
    for i in 0..params.num_types() {
        let mut row = Vec::with_capacity(policy.num_queues());
        for &q in policy.queues() {
            row.push(solved.wait_with(i, q, opts)?);
        }
        waits.push(row);
    }
    Ok(WaitTable {
        queues: policy.queues().to_vec(),
        waits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_acr, make_rcr};

    #[test]
    fn lone_agent_waits_one_service_time() {
        // arrivals vanish: a tagged flexible agent in queue 1 under ACR sees
        // an empty system and waits exactly 1/mu_1 for the next type 1 job
        let params = MarketParams::new(vec![1e-9, 1e-9], vec![30.0, 40.0], 4.0).unwrap();
        let sigma = StrategyProfile::two_type(0.5).unwrap();
        let table = virtual_wait_table(&params, &make_acr(1), &sigma, 3).unwrap();
        let w01 = table.wait(0, 1).unwrap();
        assert!((w01 - 1.0 / 40.0).abs() < 1e-6, "w01 = {w01}");
        // and in queue 0 it is served by either job type
        let w00 = table.wait(0, 0).unwrap();
        assert!((w00 - 1.0 / 70.0).abs() < 1e-6, "w00 = {w00}");
    }

    #[test]
    fn incompatible_queue_is_infinite() {
        let params = MarketParams::new(vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0], 1.0).unwrap();
        let sigma = StrategyProfile::truthful(2);
        let table = virtual_wait_table(&params, &make_acr(2), &sigma, 2).unwrap();
        // a type 1 specialist in queue 2 can never be dispatched under ACR
        assert_eq!(table.wait(1, 2), None);
        // under RCR every queue is reachable for the flexible type
        let table = virtual_wait_table(&params, &make_rcr(2, false), &sigma, 2).unwrap();
        for q in 0..=2 {
            assert!(table.wait(0, q).is_some());
        }
    }

    #[test]
    fn specialized_agents_prefer_their_own_queue_under_acr() {
        let params = MarketParams::new(vec![40.0, 60.0], vec![30.0, 40.0], 4.0).unwrap();
        for s01 in [0.0, 0.5, 1.0] {
            let sigma = StrategyProfile::two_type(s01).unwrap();
            let table = virtual_wait_table(&params, &make_acr(1), &sigma, 25).unwrap();
            let w11 = table.wait(1, 1).unwrap();
            let w10 = table.wait(1, 0).unwrap();
            assert!(
                w11 <= w10 + 1e-10,
                "sigma01={s01}: w11={w11} should not exceed w10={w10}"
            );
        }
    }
}
