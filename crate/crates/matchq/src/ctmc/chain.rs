//! Truncated-chain construction, stationary solves, and exact throughput.

use super::linalg::{solve_best, Csr};
use super::space::StateSpace;
use crate::model::{
    dispatch_sets, for_each_dispatch_outcome, DispatchSet, DispatchTarget, MarketParams,
    PolicySpec, StrategyProfile, SystemState,
};
use crate::{Error, Result};
use std::io::Write;

/// Knobs for chain construction and the linear solves behind it.
#[derive(Debug, Clone, Copy)]
pub struct ChainOptions {
    /// Hard ceiling on the number of enumerated states.
    pub state_budget: usize,
    /// Relative residual tolerance for the linear solves.
    pub solver_tol: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            state_budget: 2_000_000,
            solver_tol: 1e-11,
        }
    }
}

/// A finite truncation of the queueing chain: per-cell caps, with agent
/// arrivals at a full cell rejected (self-loops) so the generator stays
/// conservative.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    params: MarketParams,
    policy: PolicySpec,
    sigma: StrategyProfile,
    space: StateSpace,
    generator: Csr,
}

impl TruncatedChain {
    pub fn n_states(&self) -> usize {
        self.space.n_states()
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn policy(&self) -> &PolicySpec {
        &self.policy
    }

    pub fn sigma(&self) -> &StrategyProfile {
        &self.sigma
    }

    pub fn generator(&self) -> &Csr {
        &self.generator
    }

    /// State for an ordinal index (the index bijection).
    pub fn state(&self, idx: usize) -> SystemState {
        self.space.state(idx)
    }

    /// Dump the generator as CSV: one row per nonzero, cell-count columns for
    /// the source state, then target index and rate. States are ordered
    /// lexicographically on the cell tuple.
    pub fn write_generator_csv(&self, w: &mut impl Write) -> Result<()> {
        write_header(&self.space, w, &["target", "rate"])?;
        let mut counts = Vec::new();
        for s in 0..self.n_states() {
            self.space.decode(s, &mut counts);
            let (cols, vals) = self.generator.row(s);
            for (c, v) in cols.iter().zip(vals) {
                write_counts(&counts, w)?;
                writeln!(w, ",{c},{v}")?;
            }
        }
        Ok(())
    }
}

fn write_header(space: &StateSpace, w: &mut impl Write, extra: &[&str]) -> Result<()> {
    let mut names: Vec<String> = space
        .cells()
        .iter()
        .map(|&(i, q)| format!("a{i}_q{q}"))
        .collect();
    names.extend(extra.iter().map(|s| s.to_string()));
    writeln!(w, "{}", names.join(","))?;
    Ok(())
}

fn write_counts(counts: &[u64], w: &mut impl Write) -> Result<()> {
    let mut first = true;
    for n in counts {
        if !first {
            write!(w, ",")?;
        }
        write!(w, "{n}")?;
        first = false;
    }
    Ok(())
}

/// Stationary distribution over a truncated chain's states.
#[derive(Debug, Clone)]
pub struct StationaryDist {
    probs: Vec<f64>,
    tail_mass_bound: f64,
    residual: f64,
}

impl StationaryDist {
    pub fn prob(&self, idx: usize) -> f64 {
        self.probs[idx]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Stationary mass sitting on states with some cell at its cap.
    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }

    /// Achieved infinity-norm residual of `pi Q = 0`, relative to the largest
    /// exit rate.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Dump as CSV: cell-count columns then the probability.
    pub fn write_csv(&self, chain: &TruncatedChain, w: &mut impl Write) -> Result<()> {
        write_header(chain.space(), w, &["prob"])?;
        let mut counts = Vec::new();
        for s in 0..chain.n_states() {
            chain.space().decode(s, &mut counts);
            write_counts(&counts, w)?;
            writeln!(w, ",{}", self.probs[s])?;
        }
        Ok(())
    }
}

enum Assembly {
    Generator,
    /// `A h = 1` system for the expected time until a tagged agent of the
    /// given (type, queue) is matched; `A = -Q` restricted to transient
    /// states, with the match rate of the tagged agent on the diagonal.
    TaggedAbsorbing {
        tagged: (usize, usize),
    },
}

fn assemble(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    space: &StateSpace,
    mode: &Assembly,
) -> Result<Csr> {
    let ntypes = params.num_types();
    let sets_by_job: Vec<Vec<DispatchSet>> = (0..ntypes)
        .map(|j| dispatch_sets(policy, j))
        .collect::<Result<_>>()?;
    let arrival: Vec<f64> = space
        .cells()
        .iter()
        .map(|&(i, q)| {
            let col = policy.queue_index(q).expect("active cell queue");
            params.lambda(i) * sigma.get(i, col)
        })
        .collect();
    let tagged = match mode {
        Assembly::Generator => None,
        Assembly::TaggedAbsorbing { tagged } => Some(*tagged),
    };

    let n = space.n_states();
    let ncells = space.cells().len();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut counts: Vec<u64> = Vec::new();
    let mut moves: Vec<(usize, f64)> = Vec::with_capacity(4 * ncells);
    for s in 0..n {
        space.decode(s, &mut counts);
        moves.clear();
        let mut absorb = 0.0;
        for c in 0..ncells {
            if counts[c] < space.caps()[c] && arrival[c] > 0.0 {
                moves.push((s + space.stride(c), arrival[c]));
            }
            if counts[c] > 0 {
                moves.push((s - space.stride(c), counts[c] as f64 * params.theta()));
            }
        }
        for (j, sets) in sets_by_job.iter().enumerate() {
            let mu = params.mu(j);
            for_each_dispatch_outcome(
                params,
                sets,
                &|i, q| space.cell_index(i, q).map(|c| counts[c]).unwrap_or(0),
                j,
                tagged,
                &mut |target, p| match target {
                    DispatchTarget::Cell { agent_type, queue } => {
                        let c = space
                            .cell_index(agent_type, queue)
                            .expect("matched agents live in active cells");
                        moves.push((s - space.stride(c), mu * p));
                    }
                    DispatchTarget::Tagged => absorb += mu * p,
                    DispatchTarget::Lost => {}
                },
                None,
            );
        }
        let outflow: f64 = moves.iter().map(|(_, r)| r).sum();
        let mut row = Vec::with_capacity(moves.len() + 1);
        match mode {
            Assembly::Generator => {
                debug_assert_eq!(absorb, 0.0);
                row.extend(moves.iter().copied());
                row.push((s, -outflow));
            }
            Assembly::TaggedAbsorbing { .. } => {
                row.push((s, outflow + absorb));
                row.extend(moves.iter().map(|&(t, r)| (t, -r)));
            }
        }
        rows.push(row);
    }
    Ok(Csr::from_rows(rows))
}

/// Build the truncated chain with a uniform per-cell cap.
pub fn build_chain(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    cap: u64,
) -> Result<TruncatedChain> {
    build_chain_with(params, policy, sigma, |_, _| cap, &ChainOptions::default())
}

/// Build with per-cell caps; only cells with positive joining probability are
/// enumerated.
pub fn build_chain_with(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    caps_for: impl Fn(usize, usize) -> u64,
    opts: &ChainOptions,
) -> Result<TruncatedChain> {
    let space = StateSpace::for_strategy(params, policy, sigma, caps_for, opts.state_budget)?;
    let generator = assemble(params, policy, sigma, &space, &Assembly::Generator)?;
    Ok(TruncatedChain {
        params: params.clone(),
        policy: policy.clone(),
        sigma: sigma.clone(),
        space,
        generator,
    })
}

/// Solve `pi Q = 0`, `sum pi = 1` on the truncated chain.
pub fn stationary(chain: &TruncatedChain) -> Result<StationaryDist> {
    stationary_with(chain, &ChainOptions::default(), None)
}

pub fn stationary_with(
    chain: &TruncatedChain,
    opts: &ChainOptions,
    warm: Option<&[f64]>,
) -> Result<StationaryDist> {
    let (x, residual) = stationary_of_generator(&chain.generator, opts.solver_tol, warm)?;
    let mut counts = Vec::new();
    let mut tail = 0.0;
    for s in 0..chain.n_states() {
        chain.space.decode(s, &mut counts);
        if chain.space.at_boundary(&counts) {
            tail += x[s];
        }
    }
    Ok(StationaryDist {
        probs: x,
        tail_mass_bound: tail,
        residual,
    })
}

/// Stationary vector of an arbitrary conservative generator.
///
/// Grounds the balance equations at a high-mass state (estimated by a few
/// uniformized power steps), solves the reduced M-matrix system, and
/// verifies the full balance residual. Returns the probabilities and the
/// achieved residual relative to the largest exit rate.
pub(crate) fn stationary_of_generator(
    gen: &Csr,
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<(Vec<f64>, f64)> {
    let n = gen.n;
    if n == 1 {
        return Ok((vec![1.0], 0.0));
    }
    let t = gen.transpose();
    let scale = max_exit_rate(gen).max(1e-300);

    // first guess for a state carrying real mass, to pin at 1
    let mut ground = {
        let mut x = match warm {
            Some(w) if w.len() == n => w.to_vec(),
            _ => vec![1.0 / n as f64; n],
        };
        let mut y = vec![0.0; n];
        let sweeps = if n <= 4096 { 400 } else { 40 };
        for _ in 0..sweeps {
            t.mul_vec(&x, &mut y);
            for i in 0..n {
                x[i] = (x[i] + y[i] / scale).max(0.0);
            }
            let total: f64 = x.iter().sum();
            if total <= 0.0 {
                x = vec![1.0 / n as f64; n];
                break;
            }
            for v in &mut x {
                *v /= total;
            }
        }
        argmax(&x)
    };

    // Solve grounded; if the residual is poor the ground state was in the
    // tail (huge dynamic range), so re-ground at the solution's mode. Even a
    // sloppy first solve locates the mode well enough to fix the second.
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _round in 0..4 {
        let (x, residual) = solve_grounded(&t, gen, ground, scale, tol, warm);
        let better = best.as_ref().map_or(true, |(_, r)| residual < *r);
        let new_ground = argmax(&x);
        if better {
            best = Some((x, residual));
        }
        if best.as_ref().unwrap().1 <= 1e-10 || new_ground == ground {
            break;
        }
        ground = new_ground;
    }
    let (x, residual) = best.unwrap();
    if !residual.is_finite() || residual > 1e-10 {
        return Err(Error::Convergence {
            what: "stationary solve",
            residual,
            tol: 1e-10,
        });
    }
    Ok((x, residual))
}

fn argmax(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Fix `x_ground = 1`, solve the remaining balance rows of `Q^T x = 0`, and
/// normalize. Returns the distribution and its full balance residual, which
/// may be poor when the ground state sits in the distribution's tail.
fn solve_grounded(
    t: &Csr,
    gen: &Csr,
    ground: usize,
    scale: f64,
    tol: f64,
    warm: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    let n = gen.n;
    let reduce = |j: usize| if j > ground { j - 1 } else { j };
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n - 1);
    let mut b = vec![0.0; n - 1];
    for i in 0..n {
        if i == ground {
            continue;
        }
        let (cols, vals) = t.row(i);
        let mut row = Vec::with_capacity(cols.len());
        for (&j, &v) in cols.iter().zip(vals) {
            if j == ground {
                b[reduce(i)] -= v;
            } else {
                row.push((reduce(j), v));
            }
        }
        rows.push(row);
    }
    let a = Csr::from_rows(rows);
    let warm_reduced: Option<Vec<f64>> = warm.filter(|w| w.len() == n).map(|w| {
        let wg = w[ground].max(1e-300);
        (0..n).filter(|&j| j != ground).map(|j| w[j] / wg).collect()
    });
    let (y, _rep) = solve_best(&a, &b, warm_reduced.as_deref(), tol);

    let mut x = vec![0.0; n];
    x[ground] = 1.0;
    for j in 0..n {
        if j != ground {
            // overflowed entries mark states far above the ground state;
            // clamp so normalization and re-grounding stay meaningful
            let v = y[reduce(j)];
            x[j] = if v.is_finite() { v.max(0.0) } else { 1e300 };
        }
    }
    let total: f64 = x.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return (x, f64::INFINITY);
    }
    for v in &mut x {
        *v /= total;
    }

    // residual of the full balance equations, relative to the rate scale
    let mut r = vec![0.0; n];
    t.mul_vec(&x, &mut r);
    let residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
    (x, residual)
}

fn max_exit_rate(gen: &Csr) -> f64 {
    (0..gen.n)
        .map(|i| {
            let (cols, vals) = gen.row(i);
            cols.iter()
                .zip(vals)
                .find(|(c, _)| **c == i)
                .map(|(_, v)| v.abs())
                .unwrap_or(0.0)
        })
        .fold(0.0, f64::max)
}

/// Long-run matches per unit time on the truncated chain: job arrival rates
/// weighted by the stationary match probability of each dispatch.
pub fn throughput_given(chain: &TruncatedChain, dist: &StationaryDist) -> Result<f64> {
    let params = &chain.params;
    let ntypes = params.num_types();
    let sets_by_job: Vec<Vec<DispatchSet>> = (0..ntypes)
        .map(|j| dispatch_sets(&chain.policy, j))
        .collect::<Result<_>>()?;
    let space = &chain.space;
    let mut counts = Vec::new();
    let mut tp = 0.0;
    for s in 0..chain.n_states() {
        let pi = dist.prob(s);
        if pi == 0.0 {
            continue;
        }
        space.decode(s, &mut counts);
        for (j, sets) in sets_by_job.iter().enumerate() {
            let mut matched = 0.0;
            for_each_dispatch_outcome(
                params,
                sets,
                &|i, q| space.cell_index(i, q).map(|c| counts[c]).unwrap_or(0),
                j,
                None,
                &mut |target, p| {
                    if !matches!(target, DispatchTarget::Lost) {
                        matched += p;
                    }
                },
                None,
            );
            tp += pi * params.mu(j) * matched;
        }
    }
    Ok(tp)
}

/// Exact throughput at a uniform per-cell cap.
pub fn exact_throughput(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    cap: u64,
) -> Result<f64> {
    let chain = build_chain(params, policy, sigma, cap)?;
    let dist = stationary(&chain)?;
    throughput_given(&chain, &dist)
}

/// A chain solved to a target boundary mass, with caps grown per cell until
/// the measured tail is below target.
#[derive(Debug, Clone)]
pub struct SolvedChain {
    pub chain: TruncatedChain,
    pub dist: StationaryDist,
}

impl SolvedChain {
    pub fn throughput(&self) -> Result<f64> {
        throughput_given(&self.chain, &self.dist)
    }
}

/// Options for the adaptive truncation loop.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    /// Stop once the stationary mass on capped states is below this.
    pub tail_target: f64,
    pub chain: ChainOptions,
    pub max_rounds: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            tail_target: 1e-8,
            chain: ChainOptions::default(),
            max_rounds: 10,
        }
    }
}

/// Smallest n with P(Poisson(mean) > n) below `tail`, used to size per-cell
/// truncation caps: each cell's count is dominated by an M/M/inf fed by its
/// own arrivals.
pub fn poisson_truncation_cap(mean: f64, tail: f64) -> u64 {
    if mean <= 0.0 {
        return 3;
    }
    if mean > 400.0 {
        return (mean + 12.0 * mean.sqrt()).ceil() as u64;
    }
    let mut p = (-mean).exp();
    let mut cum = p;
    let mut n = 0u64;
    while 1.0 - cum > tail && n < 100_000 {
        n += 1;
        p *= mean / n as f64;
        cum += p;
    }
    (n + 2).max(3)
}

/// Build and solve with per-cell caps doubled until the measured boundary
/// mass is below the target.
pub fn solve_chain_adaptive(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    opts: &AdaptiveOptions,
) -> Result<SolvedChain> {
    // initial guess: each cell is dominated by an M/M/inf fed by its own
    // arrivals, so a Poisson quantile bounds its marginal. Only cells that
    // can populate count toward the budget split.
    let active_cells: usize = (0..params.num_types())
        .map(|i| (0..policy.num_queues()).filter(|&c| sigma.get(i, c) > 0.0).count())
        .sum();
    let per_cell_tail = (opts.tail_target / active_cells.max(1) as f64).max(1e-300);
    let mut caps: Vec<Vec<u64>> = (0..params.num_types())
        .map(|i| {
            policy
                .queues()
                .iter()
                .enumerate()
                .map(|(col, _)| {
                    let mean = params.lambda(i) * sigma.get(i, col) / params.theta();
                    poisson_truncation_cap(mean, per_cell_tail)
                })
                .collect()
        })
        .collect();

    for _ in 0..opts.max_rounds {
        let chain = build_chain_with(
            params,
            policy,
            sigma,
            |i, q| caps[i][policy.queue_index(q).unwrap()],
            &opts.chain,
        )?;
        let dist = stationary_with(&chain, &opts.chain, None)?;
        if dist.tail_mass_bound() <= opts.tail_target {
            return Ok(SolvedChain { chain, dist });
        }
        // grow the cells that actually sit at their cap with real mass
        let space = chain.space();
        let ncells = space.cells().len();
        let mut at_cap_mass = vec![0.0; ncells];
        let mut counts = Vec::new();
        for s in 0..space.n_states() {
            let pi = dist.prob(s);
            if pi == 0.0 {
                continue;
            }
            space.decode(s, &mut counts);
            for c in 0..ncells {
                if counts[c] == space.caps()[c] {
                    at_cap_mass[c] += pi;
                }
            }
        }
        let threshold = opts.tail_target / (2.0 * ncells as f64);
        for (c, &(i, q)) in space.cells().iter().enumerate() {
            if at_cap_mass[c] > threshold {
                let cur = caps[i][policy.queue_index(q).unwrap()];
                caps[i][policy.queue_index(q).unwrap()] = (cur * 8 / 5).max(cur + 4);
            }
        }
    }
    Err(Error::Convergence {
        what: "adaptive truncation",
        residual: f64::NAN,
        tol: opts.tail_target,
    })
}

pub(crate) fn assemble_tagged(chain: &TruncatedChain, tagged: (usize, usize)) -> Result<Csr> {
    assemble(
        &chain.params,
        &chain.policy,
        &chain.sigma,
        &chain.space,
        &Assembly::TaggedAbsorbing { tagged },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_acr, make_ncr};

    #[test]
    fn acr_truthful_chain_has_two_cells() {
        let params = MarketParams::new(vec![1.0, 1.0], vec![1.0, 1.0], 1.0).unwrap();
        let chain = build_chain(&params, &make_acr(1), &StrategyProfile::truthful(1), 1).unwrap();
        assert_eq!(chain.space().cells(), &[(0, 0), (1, 1)]);
        assert_eq!(chain.n_states(), 4);
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let params = MarketParams::new(vec![2.0, 3.0], vec![1.5, 2.5], 1.0).unwrap();
        let sigma = StrategyProfile::two_type(0.4).unwrap();
        let chain = build_chain(&params, &crate::model::make_rcr(1, false), &sigma, 3).unwrap();
        for s in 0..chain.n_states() {
            let (cols, vals) = chain.generator().row(s);
            let sum: f64 = vals.iter().sum();
            assert!(sum.abs() < 1e-12, "row {s} sums to {sum}");
            for (c, v) in cols.iter().zip(vals) {
                if c != &s {
                    assert!(*v >= 0.0);
                }
            }
        }
    }

    #[test]
    fn vanishing_arrivals_concentrate_on_empty_state() {
        let params = MarketParams::new(vec![1e-10, 1e-10], vec![1.0, 1.0], 1.0).unwrap();
        let chain =
            build_chain(&params, &make_ncr(1), &StrategyProfile::single_queue(1), 4).unwrap();
        let dist = stationary(&chain).unwrap();
        assert!(dist.prob(0) > 1.0 - 1e-8);
    }

    #[test]
    fn vanishing_job_rates_kill_throughput() {
        let params = MarketParams::new(vec![1.0, 1.0], vec![1e-12, 1e-12], 1.0).unwrap();
        let sigma = StrategyProfile::single_queue(1);
        let tp = exact_throughput(&params, &make_ncr(1), &sigma, 8).unwrap();
        assert!(tp < 1e-11);
    }

    #[test]
    fn stationary_sums_to_one() {
        let params = MarketParams::new(vec![4.0, 6.0], vec![3.0, 4.0], 1.0).unwrap();
        let sigma = StrategyProfile::two_type(0.3).unwrap();
        let chain = build_chain(&params, &make_acr(1), &sigma, 12).unwrap();
        let dist = stationary(&chain).unwrap();
        let total: f64 = dist.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(dist.residual() <= 1e-10);
    }
}
