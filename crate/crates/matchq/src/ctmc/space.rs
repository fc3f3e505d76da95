//! Enumeration of truncated cell-count state spaces.

use crate::model::{MarketParams, PolicySpec, StrategyProfile, SystemState};
use crate::{Error, Result};

/// The truncated state space: one coordinate per active (type, queue) cell,
/// each capped, enumerated lexicographically on the cell tuple.
#[derive(Debug, Clone)]
pub struct StateSpace {
    cells: Vec<(usize, usize)>,
    caps: Vec<u64>,
    strides: Vec<usize>,
    n_states: usize,
    /// cell_of[type][queue] -> coordinate index
    cell_of: Vec<Vec<Option<usize>>>,
}

impl StateSpace {
    /// Active cells are those a policy queue can receive arrivals into, i.e.
    /// `sigma[i][q] > 0`. Cells are ordered by (type, queue).
    pub fn for_strategy(
        params: &MarketParams,
        policy: &PolicySpec,
        sigma: &StrategyProfile,
        caps_for: impl Fn(usize, usize) -> u64,
        budget: usize,
    ) -> Result<Self> {
        sigma.validate_for(policy, params.ell())?;
        let mut cells = Vec::new();
        let mut caps = Vec::new();
        for i in 0..params.num_types() {
            for (col, &q) in policy.queues().iter().enumerate() {
                if sigma.get(i, col) > 0.0 {
                    cells.push((i, q));
                    caps.push(caps_for(i, q).max(1));
                }
            }
        }
        cells.sort_unstable();
        Self::new(params, cells, caps, budget)
    }

    pub fn new(
        params: &MarketParams,
        cells: Vec<(usize, usize)>,
        caps: Vec<u64>,
        budget: usize,
    ) -> Result<Self> {
        debug_assert_eq!(cells.len(), caps.len());
        let mut n_states = 1usize;
        for &cap in &caps {
            n_states = n_states
                .checked_mul(cap as usize + 1)
                .filter(|&n| n <= budget)
                .ok_or(Error::Capacity {
                    required: usize::MAX,
                    budget,
                })?;
        }
        if n_states > budget {
            return Err(Error::Capacity {
                required: n_states,
                budget,
            });
        }
        // last cell varies fastest: ascending index = lexicographic states
        let mut strides = vec![0usize; cells.len()];
        let mut s = 1usize;
        for c in (0..cells.len()).rev() {
            strides[c] = s;
            s *= caps[c] as usize + 1;
        }
        let max_queue = cells.iter().map(|&(_, q)| q).max().unwrap_or(0);
        let mut cell_of = vec![vec![None; max_queue + 1]; params.num_types()];
        for (idx, &(i, q)) in cells.iter().enumerate() {
            cell_of[i][q] = Some(idx);
        }
        Ok(Self {
            cells,
            caps,
            strides,
            n_states,
            cell_of,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn caps(&self) -> &[u64] {
        &self.caps
    }

    pub fn cell_index(&self, agent_type: usize, queue: usize) -> Option<usize> {
        *self.cell_of.get(agent_type)?.get(queue)?
    }

    pub fn decode(&self, idx: usize, counts: &mut Vec<u64>) {
        counts.clear();
        counts.resize(self.cells.len(), 0);
        for c in 0..self.cells.len() {
            let radix = self.caps[c] as usize + 1;
            counts[c] = (idx / self.strides[c] % radix) as u64;
        }
    }

    pub fn encode(&self, counts: &[u64]) -> usize {
        counts
            .iter()
            .zip(&self.strides)
            .map(|(&n, &s)| n as usize * s)
            .sum()
    }

    /// Stride of one cell: +stride moves that coordinate up by one.
    pub fn stride(&self, cell: usize) -> usize {
        self.strides[cell]
    }

    pub fn at_boundary(&self, counts: &[u64]) -> bool {
        counts.iter().zip(&self.caps).any(|(n, cap)| n == cap)
    }

    pub fn state(&self, idx: usize) -> SystemState {
        let mut counts = Vec::new();
        self.decode(idx, &mut counts);
        let triples: Vec<(usize, usize, u64)> = self
            .cells
            .iter()
            .zip(&counts)
            .map(|(&(i, q), &n)| (i, q, n))
            .collect();
        SystemState::from_cells(&triples)
    }
}
