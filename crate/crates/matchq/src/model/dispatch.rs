use crate::model::{compatible, MarketParams, PolicySpec, SystemState};
use crate::{Error, Result};

/// One dispatched set: the queues offered to a job in a single patience
/// evaluation. A plain priority step is a single queue; the pooled fallback
/// offers several queues at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DispatchSet(pub Vec<usize>);

/// The sequence of dispatched sets a job of `job_type` walks under `policy`.
pub(crate) fn dispatch_sets(policy: &PolicySpec, job_type: usize) -> Result<Vec<DispatchSet>> {
    let rho = policy.rho(job_type).ok_or_else(|| {
        Error::InvalidInput(format!(
            "policy has no priority list for job type {job_type}"
        ))
    })?;
    if policy.pooled_fallback() && rho.len() > 1 {
        Ok(vec![
            DispatchSet(vec![rho[0]]),
            DispatchSet(rho[1..].to_vec()),
        ])
    } else {
        Ok(rho.iter().map(|&q| DispatchSet(vec![q])).collect())
    }
}

/// Where a dispatch lands, at cell granularity. `Tagged` is the probe agent
/// used by the virtual-wait solvers and never appears in public output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchTarget {
    Cell { agent_type: usize, queue: usize },
    Tagged,
    Lost,
}

/// Walk the dispatched sets for one job and emit the outcome distribution.
///
/// `counts(i, q)` reads the pre-dispatch cell counts; `tagged` adds one extra
/// agent of the given (type, queue) that takes part in dispatch like anyone
/// else but is reported separately. Within a set, a job matches with the
/// patience model's success probability and the matched agent is uniform over
/// the compatible agents present; otherwise the walk moves to the next set,
/// and after the last set the job is lost.
pub(crate) fn for_each_dispatch_outcome(
    params: &MarketParams,
    sets: &[DispatchSet],
    counts: &impl Fn(usize, usize) -> u64,
    job_type: usize,
    tagged: Option<(usize, usize)>,
    emit: &mut impl FnMut(DispatchTarget, f64),
    mut trace: Option<&mut Vec<SetEval>>,
) {
    let ntypes = params.num_types();
    let mut remaining = 1.0_f64;
    for set in sets {
        if remaining <= 0.0 {
            break;
        }
        let mut a: u64 = 0;
        let mut b: u64 = 0;
        let mut tagged_here = false;
        for &q in &set.0 {
            for i in 0..ntypes {
                let c = counts(i, q);
                b += c;
                if compatible(i, job_type) {
                    a += c;
                }
            }
            if let Some((ti, tq)) = tagged {
                if tq == q {
                    b += 1;
                    if compatible(ti, job_type) {
                        a += 1;
                        tagged_here = true;
                    }
                }
            }
        }
        let beta = params.patience().success_prob(a, b);
        if let Some(t) = trace.as_deref_mut() {
            t.push(SetEval {
                queues: set.0.clone(),
                compatible: a,
                total: b,
                success_prob: beta,
            });
        }
        if beta > 0.0 {
            let p_match = remaining * beta;
            let a_f = a as f64;
            for &q in &set.0 {
                for i in 0..ntypes {
                    if compatible(i, job_type) {
                        let c = counts(i, q);
                        if c > 0 {
                            emit(
                                DispatchTarget::Cell {
                                    agent_type: i,
                                    queue: q,
                                },
                                p_match * c as f64 / a_f,
                            );
                        }
                    }
                }
            }
            if tagged_here {
                emit(DispatchTarget::Tagged, p_match / a_f);
            }
            remaining *= 1.0 - beta;
        }
    }
    emit(DispatchTarget::Lost, remaining.max(0.0));
}

/// Terminal outcome of a single job dispatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DispatchResult {
    Matched { agent_type: usize, queue: usize },
    Lost,
}

/// One patience evaluation along the dispatch walk.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEval {
    pub queues: Vec<usize>,
    pub compatible: u64,
    pub total: u64,
    pub success_prob: f64,
}

/// Full outcome distribution of one dispatch, plus the patience evaluations
/// used along the walk.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchDistribution {
    pub outcomes: Vec<(DispatchResult, f64)>,
    pub trace: Vec<SetEval>,
}

impl DispatchDistribution {
    pub fn lost_prob(&self) -> f64 {
        self.outcomes
            .iter()
            .filter(|(r, _)| matches!(r, DispatchResult::Lost))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn match_prob(&self) -> f64 {
        1.0 - self.lost_prob()
    }
}

/// Resolve one job arrival against the current state, returning the full
/// outcome distribution rather than a sample.
pub fn resolve_dispatch(
    params: &MarketParams,
    policy: &PolicySpec,
    state: &SystemState,
    job_type: usize,
) -> Result<DispatchDistribution> {
    if job_type >= params.num_types() {
        return Err(Error::InvalidInput(format!(
            "job type {job_type} out of range for {} types",
            params.num_types()
        )));
    }
    for (i, q, _) in state.cells() {
        if i >= params.num_types() {
            return Err(Error::InvalidInput(format!("state names agent type {i}")));
        }
        if policy.queue_index(q).is_none() {
            return Err(Error::InvalidInput(format!(
                "state places agents in queue {q} which the policy does not offer"
            )));
        }
    }
    let sets = dispatch_sets(policy, job_type)?;
    let mut outcomes = Vec::new();
    let mut trace = Vec::new();
    for_each_dispatch_outcome(
        params,
        &sets,
        &|i, q| state.get(i, q),
        job_type,
        None,
        &mut |target, p| {
            let result = match target {
                DispatchTarget::Cell { agent_type, queue } => {
                    DispatchResult::Matched { agent_type, queue }
                }
                DispatchTarget::Lost => DispatchResult::Lost,
                DispatchTarget::Tagged => unreachable!("no tagged agent supplied"),
            };
            outcomes.push((result, p));
        },
        Some(&mut trace),
    );
    Ok(DispatchDistribution { outcomes, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_acr, make_ncr, make_rcr, PatienceModel};

    fn params2() -> MarketParams {
        MarketParams::new(vec![40.0, 60.0], vec![30.0, 40.0], 4.0).unwrap()
    }

    fn params3() -> MarketParams {
        MarketParams::new(vec![10.0, 10.0, 10.0], vec![10.0, 10.0, 10.0], 1.0).unwrap()
    }

    fn prob_of(dist: &DispatchDistribution, want: DispatchResult) -> f64 {
        dist.outcomes
            .iter()
            .filter(|(r, _)| *r == want)
            .map(|(_, p)| p)
            .sum()
    }

    #[test]
    fn ncr_matches_uniformly_over_compatible() {
        let params = params2();
        let policy = make_ncr(1);
        let state = SystemState::from_cells(&[(0, 0, 2), (1, 0, 3)]);
        let dist = resolve_dispatch(&params, &policy, &state, 1).unwrap();
        let flexible = prob_of(
            &dist,
            DispatchResult::Matched {
                agent_type: 0,
                queue: 0,
            },
        );
        let specialized = prob_of(
            &dist,
            DispatchResult::Matched {
                agent_type: 1,
                queue: 0,
            },
        );
        assert!((flexible - 0.4).abs() < 1e-15);
        assert!((specialized - 0.6).abs() < 1e-15);
        assert_eq!(dist.lost_prob(), 0.0);
    }

    #[test]
    fn empty_state_is_always_lost() {
        let params = params2();
        for policy in [
            make_ncr(1),
            make_acr(1),
            make_rcr(1, false),
            make_rcr(1, true),
        ] {
            for job in 0..=1 {
                let dist = resolve_dispatch(&params, &policy, &SystemState::empty(), job).unwrap();
                assert_eq!(dist.lost_prob(), 1.0);
            }
        }
    }

    #[test]
    fn acr_falls_back_to_flexible_queue() {
        let params = params2();
        let policy = make_acr(1);
        let state = SystemState::from_cells(&[(0, 0, 3)]);
        let dist = resolve_dispatch(&params, &policy, &state, 1).unwrap();
        assert_eq!(
            prob_of(
                &dist,
                DispatchResult::Matched {
                    agent_type: 0,
                    queue: 0
                }
            ),
            1.0
        );
    }

    #[test]
    fn rcr_probes_specialized_queue_for_flexible_jobs() {
        let params = params2();
        let policy = make_rcr(1, false);
        let state = SystemState::from_cells(&[(0, 1, 2), (1, 1, 3)]);
        let dist = resolve_dispatch(&params, &policy, &state, 0).unwrap();
        // queue 0 empty, so the job probes queue 1 and must land on a
        // flexible agent there
        assert_eq!(
            prob_of(
                &dist,
                DispatchResult::Matched {
                    agent_type: 0,
                    queue: 1
                }
            ),
            1.0
        );
        assert_eq!(dist.trace.len(), 2);
        assert_eq!(dist.trace[1].compatible, 2);
        assert_eq!(dist.trace[1].total, 5);
    }

    #[test]
    fn limited_patience_dilutes_matches() {
        let policy = make_ncr(1);
        let params = params2().with_patience(PatienceModel::MaxRejections { k: 1 });
        let state = SystemState::from_cells(&[(0, 0, 1), (1, 0, 4)]);
        // job type 1: everyone is compatible
        let dist = resolve_dispatch(&params, &policy, &state, 1).unwrap();
        assert!((dist.match_prob() - 1.0).abs() < 1e-15);

        // same shape but the four others are incompatible (ell = 2, job 1)
        let params3 = params3().with_patience(PatienceModel::MaxRejections { k: 1 });
        let policy3 = make_ncr(2);
        let state3 = SystemState::from_cells(&[(0, 0, 1), (2, 0, 4)]);
        let dist3 = resolve_dispatch(&params3, &policy3, &state3, 1).unwrap();
        // frozen from the ordered-draws brute force: 1 - (4/5)(3/4) = 2/5
        assert!((dist3.match_prob() - 0.4).abs() < 1e-14);
    }

    #[test]
    fn unknown_job_type_is_an_input_error() {
        let params = params2();
        assert!(resolve_dispatch(&params, &make_ncr(1), &SystemState::empty(), 2).is_err());
    }

    /// Enumerate all states with per-cell counts below `per_cell` over the
    /// given cells.
    fn enumerate_states(
        cells: &[(usize, usize)],
        per_cell: u64,
        max_total: u64,
    ) -> Vec<SystemState> {
        let mut out = Vec::new();
        let mut counts = vec![0u64; cells.len()];
        loop {
            if counts.iter().sum::<u64>() <= max_total {
                let triples: Vec<(usize, usize, u64)> = cells
                    .iter()
                    .zip(&counts)
                    .map(|(&(i, q), &n)| (i, q, n))
                    .collect();
                out.push(SystemState::from_cells(&triples));
            }
            let mut pos = 0;
            loop {
                if pos == counts.len() {
                    return out;
                }
                counts[pos] += 1;
                if counts[pos] <= per_cell {
                    break;
                }
                counts[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn outcome_probabilities_sum_to_one_exhaustively() {
        for ell in 1..=2usize {
            let params = if ell == 1 { params2() } else { params3() };
            let patiences = [
                PatienceModel::Perfect,
                PatienceModel::MaxRejections { k: 0 },
                PatienceModel::MaxRejections { k: 2 },
            ];
            let policies = [
                make_ncr(ell),
                make_acr(ell),
                make_rcr(ell, false),
                make_rcr(ell, true),
            ];
            for patience in patiences {
                let params = params.clone().with_patience(patience);
                for policy in &policies {
                    let cells: Vec<(usize, usize)> = (0..=ell)
                        .flat_map(|i| policy.queues().iter().map(move |&q| (i, q)))
                        .collect();
                    for state in enumerate_states(&cells, 2, 6) {
                        for job in 0..=ell {
                            let dist = resolve_dispatch(&params, policy, &state, job).unwrap();
                            let total: f64 = dist.outcomes.iter().map(|(_, p)| p).sum();
                            assert!(
                                (total - 1.0).abs() < 1e-12,
                                "probabilities sum to {total} for {state:?} job {job}"
                            );
                            assert!(dist.outcomes.iter().all(|(_, p)| *p >= 0.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn perfect_patience_loses_iff_no_compatible_agent_reachable() {
        let params = params3();
        for policy in [make_ncr(2), make_acr(2), make_rcr(2, false)] {
            let cells: Vec<(usize, usize)> = (0..=2)
                .flat_map(|i| policy.queues().iter().map(move |&q| (i, q)))
                .collect();
            for state in enumerate_states(&cells, 1, 4) {
                for job in 0..=2 {
                    let dist = resolve_dispatch(&params, &policy, &state, job).unwrap();
                    let reachable = policy
                        .rho(job)
                        .unwrap()
                        .iter()
                        .any(|&q| (0..=2).any(|i| compatible(i, job) && state.get(i, q) > 0));
                    assert_eq!(
                        dist.lost_prob() == 0.0,
                        reachable,
                        "state {state:?} job {job}"
                    );
                }
            }
        }
    }

    #[test]
    fn rcr_equals_ncr_when_all_flexible_agents_switch() {
        let params = params2();
        let rcr = make_rcr(1, false);
        let ncr = make_ncr(1);
        // with sigma_01 = 1 and sigma_11 = 1 the only reachable states have
        // every agent in queue 1
        for n0 in 0..4u64 {
            for n1 in 0..4u64 {
                let state_rcr = SystemState::from_cells(&[(0, 1, n0), (1, 1, n1)]);
                let state_ncr = SystemState::from_cells(&[(0, 0, n0), (1, 0, n1)]);
                for job in 0..=1 {
                    let d_rcr = resolve_dispatch(&params, &rcr, &state_rcr, job).unwrap();
                    let d_ncr = resolve_dispatch(&params, &ncr, &state_ncr, job).unwrap();
                    for i in 0..=1usize {
                        let p_rcr = prob_of(
                            &d_rcr,
                            DispatchResult::Matched {
                                agent_type: i,
                                queue: 1,
                            },
                        );
                        let p_ncr = prob_of(
                            &d_ncr,
                            DispatchResult::Matched {
                                agent_type: i,
                                queue: 0,
                            },
                        );
                        assert!((p_rcr - p_ncr).abs() < 1e-15);
                    }
                    assert!((d_rcr.lost_prob() - d_ncr.lost_prob()).abs() < 1e-15);
                }
            }
        }
    }
}
