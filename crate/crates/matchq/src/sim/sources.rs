use super::engine::{AgentArrival, Source};
use super::stream::{exp_draw, EventStream, Purpose};
use crate::model::{MarketParams, StrategyProfile, SystemState};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Lazily sampled randomness for a single free-running simulation.
pub(crate) struct LiveSource {
    agent_rngs: Vec<ChaCha12Rng>,
    job_rngs: Vec<ChaCha12Rng>,
    dispatch_rng: ChaCha12Rng,
    base_rng: ChaCha12Rng,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    theta: f64,
    sigma_rows: Vec<Vec<f64>>,
    last_agent: Vec<f64>,
    last_job: Vec<f64>,
}

impl LiveSource {
    pub fn new(params: &MarketParams, sigma: &StrategyProfile, stream: &EventStream) -> Self {
        let ntypes = params.num_types();
        Self {
            agent_rngs: (0..ntypes)
                .map(|i| stream.rng(Purpose::AgentArrivals(i)))
                .collect(),
            job_rngs: (0..ntypes)
                .map(|j| stream.rng(Purpose::JobArrivals(j)))
                .collect(),
            dispatch_rng: stream.rng(Purpose::Dispatch(0)),
            base_rng: stream.rng(Purpose::BasePatience),
            lambda: params.lambdas().to_vec(),
            mu: params.mus().to_vec(),
            theta: params.theta(),
            sigma_rows: sigma.rows().to_vec(),
            last_agent: vec![0.0; ntypes],
            last_job: vec![0.0; ntypes],
        }
    }
}

fn pick_column(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (col, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return col;
        }
    }
    row.len() - 1
}

impl Source for LiveSource {
    fn next_agent(&mut self, agent_type: usize, _now: f64) -> Option<AgentArrival> {
        let rng = &mut self.agent_rngs[agent_type];
        let dt = exp_draw(rng, self.lambda[agent_type]);
        let u: f64 = rng.random();
        let queue_col = pick_column(&self.sigma_rows[agent_type], u);
        let patience = exp_draw(rng, self.theta);
        self.last_agent[agent_type] += dt;
        Some(AgentArrival {
            at: self.last_agent[agent_type],
            queue_col,
            patience,
        })
    }

    fn next_job(&mut self, job_type: usize, _now: f64) -> Option<f64> {
        let dt = exp_draw(&mut self.job_rngs[job_type], self.mu[job_type]);
        self.last_job[job_type] += dt;
        Some(self.last_job[job_type])
    }

    fn dispatch_u(&mut self) -> f64 {
        self.dispatch_rng.random()
    }

    fn base_patience(&mut self) -> f64 {
        exp_draw(&mut self.base_rng, self.theta)
    }
}

/// A fully pre-drawn random scenario: shared by the coupled systems so that
/// arrivals, queue choices, and the reneging of commonly counted agents are
/// identical across them.
#[derive(Debug, Clone)]
pub(crate) struct Scenario {
    pub agent_events: Vec<Vec<AgentArrival>>,
    pub job_events: Vec<Vec<f64>>,
    pub base_patience: Vec<f64>,
    pub extra_patience: f64,
}

impl Scenario {
    pub fn generate(
        params: &MarketParams,
        sigma: &StrategyProfile,
        base_state: &SystemState,
        horizon: f64,
        stream: &EventStream,
    ) -> Self {
        let ntypes = params.num_types();
        let mut agent_events = Vec::with_capacity(ntypes);
        for i in 0..ntypes {
            let mut rng = stream.rng(Purpose::AgentArrivals(i));
            let mut t = 0.0;
            let mut events = Vec::new();
            loop {
                t += exp_draw(&mut rng, params.lambda(i));
                if t > horizon {
                    break;
                }
                let u: f64 = rng.random();
                let queue_col = pick_column(sigma.row(i), u);
                let patience = exp_draw(&mut rng, params.theta());
                events.push(AgentArrival {
                    at: t,
                    queue_col,
                    patience,
                });
            }
            agent_events.push(events);
        }
        let mut job_events = Vec::with_capacity(ntypes);
        for j in 0..ntypes {
            let mut rng = stream.rng(Purpose::JobArrivals(j));
            let mut t = 0.0;
            let mut events = Vec::new();
            loop {
                t += exp_draw(&mut rng, params.mu(j));
                if t > horizon {
                    break;
                }
                events.push(t);
            }
            job_events.push(events);
        }
        let mut base_rng = stream.rng(Purpose::BasePatience);
        let base_patience = (0..base_state.total())
            .map(|_| exp_draw(&mut base_rng, params.theta()))
            .collect();
        let extra_patience = exp_draw(&mut stream.rng(Purpose::ExtraPatience), params.theta());
        Self {
            agent_events,
            job_events,
            base_patience,
            extra_patience,
        }
    }
}

/// Replays one scenario for one system; only dispatch draws are private.
pub(crate) struct ScenarioSource<'a> {
    scenario: &'a Scenario,
    agent_cursor: Vec<usize>,
    job_cursor: Vec<usize>,
    base_cursor: usize,
    dispatch_rng: ChaCha12Rng,
}

impl<'a> ScenarioSource<'a> {
    pub fn new(scenario: &'a Scenario, stream: &EventStream, system: usize) -> Self {
        Self {
            scenario,
            agent_cursor: vec![0; scenario.agent_events.len()],
            job_cursor: vec![0; scenario.job_events.len()],
            base_cursor: 0,
            dispatch_rng: stream.rng(Purpose::Dispatch(system)),
        }
    }
}

impl Source for ScenarioSource<'_> {
    fn next_agent(&mut self, agent_type: usize, _now: f64) -> Option<AgentArrival> {
        let cursor = &mut self.agent_cursor[agent_type];
        let ev = self.scenario.agent_events[agent_type].get(*cursor).copied();
        if ev.is_some() {
            *cursor += 1;
        }
        ev
    }

    fn next_job(&mut self, job_type: usize, _now: f64) -> Option<f64> {
        let cursor = &mut self.job_cursor[job_type];
        let ev = self.scenario.job_events[job_type].get(*cursor).copied();
        if ev.is_some() {
            *cursor += 1;
        }
        ev
    }

    fn dispatch_u(&mut self) -> f64 {
        self.dispatch_rng.random()
    }

    fn base_patience(&mut self) -> f64 {
        let p = self.scenario.base_patience[self.base_cursor];
        self.base_cursor += 1;
        p
    }
}
