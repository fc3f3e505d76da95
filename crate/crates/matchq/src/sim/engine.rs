use crate::model::{
    dispatch_sets, for_each_dispatch_outcome, DispatchSet, DispatchTarget, MarketParams,
    PolicySpec, SystemState,
};
use crate::Result;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// One pre-drawn agent arrival.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AgentArrival {
    pub at: f64,
    pub queue_col: usize,
    pub patience: f64,
}

/// Randomness feeding the engine: live streams or a pre-generated scenario.
pub(crate) trait Source {
    /// Next arrival of one agent type, strictly after the previous one.
    fn next_agent(&mut self, agent_type: usize, now: f64) -> Option<AgentArrival>;
    /// Next arrival time of one job type.
    fn next_job(&mut self, job_type: usize, now: f64) -> Option<f64>;
    /// Uniform draw for dispatch selection.
    fn dispatch_u(&mut self) -> f64;
    /// Patience for an agent present at time zero.
    fn base_patience(&mut self) -> f64;
}

#[derive(Debug, Clone, Copy)]
struct Agent {
    arrived: f64,
    cell: usize,
    alive: bool,
}

/// Time ordering for the abandonment heap.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TimeOrd(f64);
impl Eq for TimeOrd {}
impl PartialOrd for TimeOrd {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for TimeOrd {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// What a single processed event was, for observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Step {
    Abandon {
        agent_type: usize,
        queue: usize,
    },
    AgentArrive {
        agent_type: usize,
        queue: usize,
    },
    Match {
        agent_type: usize,
        queue: usize,
        job_type: usize,
        wait: f64,
    },
    MatchTagged {
        job_type: usize,
    },
    Lose {
        job_type: usize,
    },
}

/// Kept event-log record (the CSV contract of the verbose mode).
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: f64,
    pub kind: &'static str,
    pub type_index: usize,
    pub queue: Option<usize>,
}

pub(crate) struct Counters {
    pub matches: u64,
    pub lost_jobs: Vec<u64>,
    pub job_arrivals: Vec<u64>,
    /// (count, sum, sum of squares) of realized waits per cell.
    pub waits: Vec<(u64, f64, f64)>,
}

pub(crate) struct Engine<'a, S: Source> {
    params: &'a MarketParams,
    policy: &'a PolicySpec,
    source: S,
    sets_by_job: Vec<Vec<DispatchSet>>,
    cells: Vec<(usize, usize)>,
    cell_of: Vec<Vec<Option<usize>>>,
    members: Vec<Vec<u32>>,
    agents: Vec<Agent>,
    heap: BinaryHeap<Reverse<(TimeOrd, u32)>>,
    pending_agent: Vec<Option<AgentArrival>>,
    pending_job: Vec<Option<f64>>,
    tagged: Option<(usize, usize, f64)>,
    pub now: f64,
    pub counters: Counters,
    scratch: Vec<(DispatchTarget, f64)>,
    pub log: Option<Vec<LogEntry>>,
}

impl<'a, S: Source> Engine<'a, S> {
    pub fn new(params: &'a MarketParams, policy: &'a PolicySpec, source: S) -> Result<Self> {
        let ntypes = params.num_types();
        let sets_by_job = (0..ntypes)
            .map(|j| dispatch_sets(policy, j))
            .collect::<Result<_>>()?;
        let mut cells = Vec::new();
        for i in 0..ntypes {
            for &q in policy.queues() {
                cells.push((i, q));
            }
        }
        let max_queue = policy.queues().iter().copied().max().unwrap_or(0);
        let mut cell_of = vec![vec![None; max_queue + 1]; ntypes];
        for (c, &(i, q)) in cells.iter().enumerate() {
            cell_of[i][q] = Some(c);
        }
        let members = vec![Vec::new(); cells.len()];
        Ok(Self {
            params,
            policy,
            source,
            sets_by_job,
            members,
            cell_of,
            cells: cells.clone(),
            agents: Vec::new(),
            heap: BinaryHeap::new(),
            pending_agent: vec![None; ntypes],
            pending_job: vec![None; ntypes],
            tagged: None,
            now: 0.0,
            counters: Counters {
                matches: 0,
                lost_jobs: vec![0; ntypes],
                job_arrivals: vec![0; ntypes],
                waits: vec![(0, 0.0, 0.0); cells.len()],
            },
            scratch: Vec::new(),
            log: None,
        })
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    fn push_agent(&mut self, cell: usize, arrived: f64, patience: f64) {
        let id = self.agents.len() as u32;
        self.agents.push(Agent {
            arrived,
            cell,
            alive: true,
        });
        self.members[cell].push(id);
        self.heap.push(Reverse((TimeOrd(arrived + patience), id)));
    }

    /// Seed the initial state, drawing one patience value per agent in
    /// deterministic cell order.
    pub fn seed_state(&mut self, state: &SystemState) {
        for (i, q, n) in state.cells() {
            let cell = self.cell_of[i][q].expect("state cell within policy queues");
            for _ in 0..n {
                let patience = self.source.base_patience();
                self.push_agent(cell, 0.0, patience);
            }
        }
    }

    /// Seed one extra agent with an explicit patience draw (coupled runs).
    pub fn seed_extra(&mut self, agent_type: usize, queue: usize, patience: f64) {
        let cell = self.cell_of[agent_type][queue].expect("extra agent cell");
        self.push_agent(cell, 0.0, patience);
    }

    /// Place a tagged, never-abandoning agent; it competes in dispatch.
    pub fn set_tagged(&mut self, agent_type: usize, queue: usize) {
        debug_assert!(self.tagged.is_none());
        self.tagged = Some((agent_type, queue, self.now));
    }

    /// Drop the tagged agent without a match (censoring).
    pub fn clear_tagged(&mut self) {
        self.tagged = None;
    }

    fn next_abandon(&mut self) -> Option<(f64, u32)> {
        while let Some(&Reverse((TimeOrd(t), id))) = self.heap.peek() {
            if self.agents[id as usize].alive {
                return Some((t, id));
            }
            self.heap.pop();
        }
        None
    }

    fn log_event(&mut self, kind: &'static str, type_index: usize, queue: Option<usize>) {
        if let Some(log) = self.log.as_mut() {
            log.push(LogEntry {
                time: self.now,
                kind,
                type_index,
                queue,
            });
        }
    }

    /// Process the next event at or before `t_stop`. Ties are broken by the
    /// fixed category order abandonment < agent arrival < job arrival, then
    /// by type index.
    pub fn step(&mut self, t_stop: f64) -> Option<Step> {
        let ntypes = self.params.num_types();
        for i in 0..ntypes {
            if self.pending_agent[i].is_none() {
                self.pending_agent[i] = self.source.next_agent(i, self.now);
            }
            if self.pending_job[i].is_none() {
                self.pending_job[i] = self.source.next_job(i, self.now);
            }
        }
        // candidate = (time, category, type index)
        let mut best: Option<(f64, u8, usize)> = None;
        let consider = |cand: (f64, u8, usize), best: &mut Option<(f64, u8, usize)>| {
            let better = match best {
                None => true,
                Some(b) => (cand.0, cand.1, cand.2) < *b,
            };
            if better {
                *best = Some(cand);
            }
        };
        if let Some((t, id)) = self.next_abandon() {
            consider((t, 0, id as usize), &mut best);
        }
        for i in 0..ntypes {
            if let Some(a) = self.pending_agent[i] {
                consider((a.at, 1, i), &mut best);
            }
            if let Some(t) = self.pending_job[i] {
                consider((t, 2, i), &mut best);
            }
        }
        let (t, category, idx) = best?;
        if t > t_stop {
            self.now = t_stop;
            return None;
        }
        self.now = t;
        match category {
            0 => {
                let _ = self.heap.pop();
                let agent = &mut self.agents[idx];
                agent.alive = false;
                let cell = agent.cell;
                let pos = self.members[cell]
                    .iter()
                    .position(|&a| a as usize == idx)
                    .expect("abandoning agent is a member");
                self.members[cell].swap_remove(pos);
                let (i, q) = self.cells[cell];
                self.log_event("abandon", i, Some(q));
                Some(Step::Abandon {
                    agent_type: i,
                    queue: q,
                })
            }
            1 => {
                let arrival = self.pending_agent[idx].take().expect("pending arrival");
                let q = self.policy.queues()[arrival.queue_col];
                let cell = self.cell_of[idx][q].expect("arrival cell");
                self.push_agent(cell, arrival.at, arrival.patience);
                self.log_event("agent_arrival", idx, Some(q));
                Some(Step::AgentArrive {
                    agent_type: idx,
                    queue: q,
                })
            }
            _ => {
                self.pending_job[idx] = None;
                self.counters.job_arrivals[idx] += 1;
                self.log_event("job_arrival", idx, None);
                Some(self.dispatch_job(idx))
            }
        }
    }

    fn dispatch_job(&mut self, job_type: usize) -> Step {
        self.scratch.clear();
        let members = &self.members;
        let cell_of = &self.cell_of;
        let tagged = self.tagged.map(|(i, q, _)| (i, q));
        let scratch = &mut self.scratch;
        for_each_dispatch_outcome(
            self.params,
            &self.sets_by_job[job_type],
            &|i, q| {
                cell_of
                    .get(i)
                    .and_then(|row| row.get(q))
                    .and_then(|c| *c)
                    .map(|c| members[c].len() as u64)
                    .unwrap_or(0)
            },
            job_type,
            tagged,
            &mut |target, p| scratch.push((target, p)),
            None,
        );
        let u = self.source.dispatch_u();
        let mut acc = 0.0;
        let mut chosen = DispatchTarget::Lost;
        for &(target, p) in self.scratch.iter() {
            acc += p;
            if u < acc {
                chosen = target;
                break;
            }
        }
        match chosen {
            DispatchTarget::Cell { agent_type, queue } => {
                let cell = self.cell_of[agent_type][queue].expect("matched cell");
                let v = self.source.dispatch_u();
                let len = self.members[cell].len();
                debug_assert!(len > 0);
                let pick = ((v * len as f64) as usize).min(len - 1);
                let id = self.members[cell].swap_remove(pick);
                let agent = &mut self.agents[id as usize];
                agent.alive = false;
                let wait = self.now - agent.arrived;
                self.counters.matches += 1;
                let w = &mut self.counters.waits[cell];
                w.0 += 1;
                w.1 += wait;
                w.2 += wait * wait;
                self.log_event("match", agent_type, Some(queue));
                Step::Match {
                    agent_type,
                    queue,
                    job_type,
                    wait,
                }
            }
            DispatchTarget::Tagged => {
                let (i, q, _since) = self.tagged.take().expect("tagged present");
                self.counters.matches += 1;
                self.log_event("match_tagged", i, Some(q));
                Step::MatchTagged { job_type }
            }
            DispatchTarget::Lost => {
                self.counters.lost_jobs[job_type] += 1;
                self.log_event("loss", job_type, None);
                Step::Lose { job_type }
            }
        }
    }
}
