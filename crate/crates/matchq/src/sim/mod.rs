//! Discrete-event Monte Carlo engine with common-random-number coupling.
//!
//! Every dispatch samples from the same outcome distribution the exact
//! solvers integrate, so the two paths share one semantics. Replications are
//! deterministic functions of the seed; coupled runs share arrival, queue
//! choice, and reneging draws the way the paired-dominance comparisons
//! require.

mod engine;
mod sources;
mod stream;

pub use engine::LogEntry;
pub use stream::EventStream;

/// Write an event log as CSV: time, event kind, job or agent type, queue.
pub fn write_log_csv(log: &[LogEntry], w: &mut impl std::io::Write) -> crate::Result<()> {
    writeln!(w, "time,kind,type_index,queue")?;
    for e in log {
        writeln!(
            w,
            "{},{},{},{}",
            e.time,
            e.kind,
            e.type_index,
            e.queue.map(|q| q.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

use crate::model::{MarketParams, PolicyKind, PolicySpec, StrategyProfile, SystemState};
use crate::{Error, Result};
use engine::{Engine, Step};
use sources::{LiveSource, Scenario, ScenarioSource};
use stream::{exp_draw, Purpose};

const BATCHES: usize = 32;
/// two-sided 97.5% Student-t quantile at 31 degrees of freedom
const T_975_31: f64 = 2.0395;

/// Accumulated waiting-time samples of matched agents in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaitStat {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl WaitStat {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Counters and estimates from one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub matches: u64,
    pub lost_jobs: Vec<u64>,
    pub job_arrivals: Vec<u64>,
    pub horizon: f64,
    /// Realized waits of matched agents per (agent type, queue).
    pub waits: Vec<((usize, usize), WaitStat)>,
    /// Matches per unit time over the whole horizon.
    pub throughput: f64,
    /// Confidence half-width from batch means (32 batches, 95%).
    pub throughput_half_width: f64,
    pub log: Option<Vec<LogEntry>>,
}

fn validate_state(policy: &PolicySpec, params: &MarketParams, state: &SystemState) -> Result<()> {
    for (i, q, _) in state.cells() {
        if i >= params.num_types() {
            return Err(Error::InvalidInput(format!(
                "initial state names agent type {i}"
            )));
        }
        if policy.queue_index(q).is_none() {
            return Err(Error::InvalidInput(format!(
                "initial state places agents in queue {q} outside the policy"
            )));
        }
    }
    Ok(())
}

/// Event-driven simulation from `initial_state` to `horizon`. Deterministic
/// given the stream.
pub fn run(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    horizon: f64,
    initial_state: &SystemState,
    stream: &EventStream,
) -> Result<SimResult> {
    run_opts(params, policy, sigma, horizon, initial_state, stream, false)
}

/// As [`run`], optionally retaining the full event log.
pub fn run_opts(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    horizon: f64,
    initial_state: &SystemState,
    stream: &EventStream,
    keep_log: bool,
) -> Result<SimResult> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon {horizon} invalid")));
    }
    sigma.validate_for(policy, params.ell())?;
    validate_state(policy, params, initial_state)?;
    let source = LiveSource::new(params, sigma, stream);
    let mut engine = Engine::new(params, policy, source)?;
    if keep_log {
        engine.log = Some(Vec::new());
    }
    engine.seed_state(initial_state);

    let batch_len = horizon / BATCHES as f64;
    let mut batch_matches = [0u64; BATCHES];
    while let Some(step) = engine.step(horizon) {
        if matches!(step, Step::Match { .. }) {
            let b = ((engine.now / batch_len) as usize).min(BATCHES - 1);
            batch_matches[b] += 1;
        }
    }

    let matches = engine.counters.matches;
    let throughput = matches as f64 / horizon;
    let batch_tps: Vec<f64> = batch_matches
        .iter()
        .map(|&m| m as f64 / batch_len)
        .collect();
    let mean: f64 = batch_tps.iter().sum::<f64>() / BATCHES as f64;
    let var: f64 = batch_tps
        .iter()
        .map(|t| (t - mean) * (t - mean))
        .sum::<f64>()
        / (BATCHES as f64 - 1.0);
    let half_width = T_975_31 * (var / BATCHES as f64).sqrt();

    let waits = engine
        .cells()
        .iter()
        .zip(&engine.counters.waits)
        .map(|(&(i, q), &(count, sum, sum_sq))| ((i, q), WaitStat { count, sum, sum_sq }))
        .collect();
    Ok(SimResult {
        matches,
        lost_jobs: engine.counters.lost_jobs.clone(),
        job_arrivals: engine.counters.job_arrivals.clone(),
        horizon,
        waits,
        throughput,
        throughput_half_width: half_width,
        log: engine.log.take(),
    })
}

/// Paired-difference summary across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedStats {
    pub mean: f64,
    pub std_err: f64,
    pub replications: usize,
}

impl PairedStats {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / (n as f64 - 1.0).max(1.0);
        Self {
            mean,
            std_err: (var / n as f64).sqrt(),
            replications: n,
        }
    }
}

/// Coupled estimates of the value of one extra agent: expected matches from
/// the base state and with one extra flexible or specialized agent, plus the
/// paired differences `1 + E[M|A] - E[M|A+e0]` and `E[M|A+e0] - E[M|A+ei]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledResult {
    pub base_mean: f64,
    pub with_flexible_mean: f64,
    pub with_specialized_mean: f64,
    /// `1 + E[M|A] - E[M|A + e_flexible]`, nonnegative per the dominance.
    pub one_plus_base_minus_flexible: PairedStats,
    /// `E[M|A + e_flexible] - E[M|A + e_specialized]`, nonnegative.
    pub flexible_minus_specialized: PairedStats,
}

/// Where the extra agents sit for each policy's dominance statement: under
/// NCR and ACR the flexible extra joins the flexible queue, under RCR it
/// joins queue `i` alongside the extra specialist.
fn extra_placements(kind: PolicyKind, i: usize) -> ((usize, usize), (usize, usize)) {
    match kind {
        PolicyKind::Ncr => ((0, 0), (i, 0)),
        PolicyKind::Acr => ((0, 0), (i, i)),
        PolicyKind::Rcr => ((0, i), (i, i)),
    }
}

fn policy_for(kind: PolicyKind, ell: usize) -> PolicySpec {
    match kind {
        PolicyKind::Ncr => crate::model::make_ncr(ell),
        PolicyKind::Acr => crate::model::make_acr(ell),
        PolicyKind::Rcr => crate::model::make_rcr(ell, false),
    }
}

/// Run the three coupled systems for one replication; returns their match
/// counts and, when asked, their event logs.
#[allow(clippy::too_many_arguments)]
fn coupled_replication(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    base_state: &SystemState,
    placements: ((usize, usize), (usize, usize)),
    horizon: f64,
    stream: &EventStream,
    keep_log: bool,
) -> Result<([u64; 3], Option<[Vec<LogEntry>; 3]>)> {
    let scenario = Scenario::generate(params, sigma, base_state, horizon, stream);
    let mut counts = [0u64; 3];
    let mut logs: Option<[Vec<LogEntry>; 3]> = keep_log.then(Default::default);
    for sys in 0..3 {
        let source = ScenarioSource::new(&scenario, stream, sys);
        let mut engine = Engine::new(params, policy, source)?;
        if keep_log {
            engine.log = Some(Vec::new());
        }
        engine.seed_state(base_state);
        match sys {
            1 => engine.seed_extra(placements.0 .0, placements.0 .1, scenario.extra_patience),
            2 => engine.seed_extra(placements.1 .0, placements.1 .1, scenario.extra_patience),
            _ => {}
        }
        while engine.step(horizon).is_some() {}
        counts[sys] = engine.counters.matches;
        if let (Some(logs), Some(log)) = (logs.as_mut(), engine.log.take()) {
            logs[sys] = log;
        }
    }
    Ok((counts, logs))
}

/// Coupled paired comparison of the base system against one extra flexible
/// and one extra type `i` agent, per the value-of-flexibility dominance.
///
/// All three systems share agent arrivals (times, queue choices, patience),
/// job arrivals, and the base-state agents' patience; the two extra agents
/// share a single patience draw. Dispatch randomization stays per-system.
#[allow(clippy::too_many_arguments)]
pub fn coupled_value_of_flexibility(
    params: &MarketParams,
    kind: PolicyKind,
    sigma: &StrategyProfile,
    base_state: &SystemState,
    i: usize,
    horizon: f64,
    replications: usize,
    stream: &EventStream,
) -> Result<CoupledResult> {
    if i == 0 || i >= params.num_types() {
        return Err(Error::InvalidInput(format!(
            "extra specialized type {i} out of range"
        )));
    }
    if replications == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    let policy = policy_for(kind, params.ell());
    sigma.validate_for(&policy, params.ell())?;
    validate_state(&policy, params, base_state)?;
    let placements = extra_placements(kind, i);

    let mut d1 = Vec::with_capacity(replications);
    let mut d2 = Vec::with_capacity(replications);
    let mut sums = [0.0f64; 3];
    for rep in 0..replications {
        let rep_stream = stream.replication(rep as u64);
        let (counts, _) = coupled_replication(
            params,
            &policy,
            sigma,
            base_state,
            placements,
            horizon,
            &rep_stream,
            false,
        )?;
        let (m0, m1, m2) = (counts[0] as f64, counts[1] as f64, counts[2] as f64);
        sums[0] += m0;
        sums[1] += m1;
        sums[2] += m2;
        d1.push(1.0 + m0 - m1);
        d2.push(m1 - m2);
    }
    let n = replications as f64;
    Ok(CoupledResult {
        base_mean: sums[0] / n,
        with_flexible_mean: sums[1] / n,
        with_specialized_mean: sums[2] / n,
        one_plus_base_minus_flexible: PairedStats::from_samples(&d1),
        flexible_minus_specialized: PairedStats::from_samples(&d2),
    })
}

/// Event logs of one coupled replication, for the shared-arrivals assertion.
pub fn coupled_event_logs(
    params: &MarketParams,
    kind: PolicyKind,
    sigma: &StrategyProfile,
    base_state: &SystemState,
    i: usize,
    horizon: f64,
    stream: &EventStream,
) -> Result<[Vec<LogEntry>; 3]> {
    let policy = policy_for(kind, params.ell());
    let placements = extra_placements(kind, i);
    let (_, logs) = coupled_replication(
        params, &policy, sigma, base_state, placements, horizon, stream, true,
    )?;
    Ok(logs.expect("logs requested"))
}

/// Estimate of a tagged agent's expected wait from regenerative injections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedWaitEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
    /// Set when injections repeatedly outlive the watchdog: the wait is
    /// structurally unbounded for this (type, queue).
    pub infinite: bool,
    pub censored: u64,
}

/// Options for [`tagged_wait`].
#[derive(Debug, Clone, Copy)]
pub struct TaggedWaitOptions {
    /// Episodes are censored after this multiple of `1/theta`.
    pub watchdog_multiple: f64,
    /// Consecutive censored episodes before reporting an infinite wait.
    pub starvation_limit: u64,
}

impl Default for TaggedWaitOptions {
    fn default() -> Self {
        Self {
            watchdog_multiple: 200.0,
            starvation_limit: 3,
        }
    }
}

/// Inject a non-abandoning tagged agent at Poisson epochs after warmup and
/// measure its time to match, repeating across regenerative injections. The
/// tagged agent competes in dispatch like any other agent and does not
/// displace the arrival process.
pub fn tagged_wait(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    agent_type: usize,
    queue: usize,
    replications: usize,
    warmup: f64,
    stream: &EventStream,
) -> Result<TaggedWaitEstimate> {
    tagged_wait_opts(
        params,
        policy,
        sigma,
        agent_type,
        queue,
        replications,
        warmup,
        stream,
        &TaggedWaitOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn tagged_wait_opts(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    agent_type: usize,
    queue: usize,
    replications: usize,
    warmup: f64,
    stream: &EventStream,
    opts: &TaggedWaitOptions,
) -> Result<TaggedWaitEstimate> {
    if policy.queue_index(queue).is_none() {
        return Err(Error::InvalidInput(format!(
            "queue {queue} not offered by the policy"
        )));
    }
    sigma.validate_for(policy, params.ell())?;
    let source = LiveSource::new(params, sigma, stream);
    let mut engine = Engine::new(params, policy, source)?;
    engine.seed_state(&SystemState::empty());
    let mut inject_rng = stream.rng(Purpose::Injection);
    let inject_rate = params.theta();
    let watchdog = opts.watchdog_multiple / params.theta();

    // warm up
    while engine.step(warmup).is_some() {}

    let (mut count, mut sum, mut sum_sq) = (0u64, 0.0f64, 0.0f64);
    let mut censored = 0u64;
    let mut consecutive = 0u64;
    let mut infinite = false;
    while count < replications as u64 {
        let inject_at = engine.now + exp_draw(&mut inject_rng, inject_rate);
        while engine.step(inject_at).is_some() {}
        engine.set_tagged(agent_type, queue);
        let injected = engine.now;
        let deadline = injected + watchdog;
        loop {
            match engine.step(deadline) {
                Some(Step::MatchTagged { .. }) => {
                    let w = engine.now - injected;
                    count += 1;
                    sum += w;
                    sum_sq += w * w;
                    consecutive = 0;
                    break;
                }
                Some(_) => {}
                None => {
                    engine.clear_tagged();
                    censored += 1;
                    consecutive += 1;
                    break;
                }
            }
        }
        if consecutive >= opts.starvation_limit {
            infinite = true;
            break;
        }
    }
    let mean = if count > 0 {
        sum / count as f64
    } else {
        f64::NAN
    };
    let var = if count > 1 {
        (sum_sq - sum * sum / count as f64) / (count as f64 - 1.0)
    } else {
        0.0
    };
    Ok(TaggedWaitEstimate {
        mean,
        std_err: (var / count.max(1) as f64).sqrt(),
        samples: count,
        infinite,
        censored,
    })
}
