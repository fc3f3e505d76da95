use std::collections::BTreeMap;

/// Counts of waiting agents by (true type, queue joined).
///
/// The map only stores nonzero cells; ordering is deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SystemState {
    counts: BTreeMap<(usize, usize), u64>,
}

impl SystemState {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Build from `(agent_type, queue, count)` triples.
    pub fn from_cells(cells: &[(usize, usize, u64)]) -> Self {
        let mut s = Self::empty();
        for &(i, q, n) in cells {
            s.set(i, q, n);
        }
        s
    }

    pub fn get(&self, agent_type: usize, queue: usize) -> u64 {
        self.counts.get(&(agent_type, queue)).copied().unwrap_or(0)
    }

    pub fn set(&mut self, agent_type: usize, queue: usize, count: u64) {
        if count == 0 {
            self.counts.remove(&(agent_type, queue));
        } else {
            self.counts.insert((agent_type, queue), count);
        }
    }

    pub fn add(&mut self, agent_type: usize, queue: usize, delta: i64) {
        let cur = self.get(agent_type, queue) as i64;
        let next = cur + delta;
        assert!(next >= 0, "cell ({agent_type}, {queue}) going negative");
        self.set(agent_type, queue, next as u64);
    }

    /// Total agents of one type across all queues (the `A_i` accessor).
    pub fn type_total(&self, agent_type: usize) -> u64 {
        self.counts
            .iter()
            .filter(|((i, _), _)| *i == agent_type)
            .map(|(_, n)| n)
            .sum()
    }

    /// Total agents in one queue across all types.
    pub fn queue_total(&self, queue: usize) -> u64 {
        self.counts
            .iter()
            .filter(|((_, q), _)| *q == queue)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Nonzero cells in deterministic (type, queue) order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts.iter().map(|(&(i, q), &n)| (i, q, n))
    }
}
