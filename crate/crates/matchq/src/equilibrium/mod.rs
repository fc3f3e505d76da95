//! Nash-equilibrium computation over queue-joining strategies.
//!
//! A profile is an equilibrium when no agent type puts mass on a queue whose
//! expected virtual wait exceeds the type's best queue. The scalar solver
//! covers two-type markets (the built-in sweeps live there); the damped
//! projected iteration covers general markets.

mod simplex;

pub use simplex::project_row_simplex;

use crate::ctmc::{
    solve_chain_adaptive, wait_table_given, AdaptiveOptions, SolvedChain, WaitTable,
};
use crate::model::{MarketParams, PolicySpec, StrategyProfile};
use crate::{Error, Result};

/// Mass below which a queue does not count as supported in the equilibrium
/// condition.
pub const SUPPORT_EPS: f64 = 1e-9;

/// One equilibrium (or best iterate) with its supporting evidence.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub sigma_star: StrategyProfile,
    pub wait_table: WaitTable,
    /// Worst excess wait over the row minimum across supported cells.
    pub residual: f64,
    pub iterations: usize,
    pub method: &'static str,
    pub converged: bool,
}

/// Residual of the equilibrium condition at a profile, from a wait table:
/// `max` over supported `(i, q)` of `E[W_iq] - min_q' E[W_iq']`.
pub fn ne_residual(sigma: &StrategyProfile, waits: &WaitTable, eps: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..waits.num_types() {
        let row_min = waits.row_min(i);
        for (col, &q) in waits.queues().to_vec().iter().enumerate() {
            if sigma.get(i, col) <= eps {
                continue;
            }
            match (waits.wait(i, q), row_min) {
                (Some(w), Some(m)) => worst = worst.max(w - m),
                (None, Some(_)) => return f64::INFINITY,
                _ => {}
            }
        }
    }
    worst
}

/// Verification report for a claimed equilibrium.
#[derive(Debug, Clone)]
pub struct NeReport {
    pub residual: f64,
    pub ok: bool,
    pub wait_table: WaitTable,
}

/// Recompute waits from scratch at `sigma` and evaluate the equilibrium
/// residual against `tol`. Pure check, no mutation.
pub fn verify_ne(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    eps: f64,
    tol: f64,
) -> Result<NeReport> {
    verify_ne_with(params, policy, sigma, eps, tol, &AdaptiveOptions::default())
}

pub fn verify_ne_with(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
    eps: f64,
    tol: f64,
    opts: &AdaptiveOptions,
) -> Result<NeReport> {
    let solved = solve_chain_adaptive(params, policy, sigma, opts)?;
    let waits = wait_table_given(&solved, &opts.chain)?;
    let residual = ne_residual(sigma, &waits, eps);
    Ok(NeReport {
        residual,
        ok: residual <= tol,
        wait_table: waits,
    })
}

/// Options for the two-type scalar solver.
#[derive(Debug, Clone, Copy)]
pub struct ScalarOptions {
    /// Evaluation points of the initial sign scan over `[0, 1]`.
    pub grid: usize,
    /// Bisection stops once the wait difference is below this (time units).
    pub tol: f64,
    /// Chain truncation and solver knobs.
    pub adaptive: AdaptiveOptions,
    /// Hard cap on bisection steps per bracket.
    pub max_bisections: usize,
}

impl Default for ScalarOptions {
    fn default() -> Self {
        Self {
            grid: 13,
            tol: 1e-6,
            adaptive: AdaptiveOptions::default(),
            max_bisections: 60,
        }
    }
}

fn flexible_wait_gap(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma01: f64,
    opts: &AdaptiveOptions,
) -> Result<(f64, SolvedChain)> {
    let sigma = StrategyProfile::two_type(sigma01)?;
    let solved = solve_chain_adaptive(params, policy, &sigma, opts)?;
    let w00 = solved
        .wait_with(0, 0, &opts.chain)?
        .ok_or_else(|| Error::InvalidInput("queue 0 unreachable for flexible agents".into()))?;
    let w01 = solved
        .wait_with(0, 1, &opts.chain)?
        .ok_or_else(|| Error::InvalidInput("queue 1 unreachable for flexible agents".into()))?;
    Ok((w00 - w01, solved))
}

fn finish_scalar(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma01: f64,
    method: &'static str,
    iterations: usize,
    opts: &ScalarOptions,
) -> Result<EquilibriumResult> {
    let sigma = StrategyProfile::two_type(sigma01)?;
    let solved = solve_chain_adaptive(params, policy, &sigma, &opts.adaptive)?;
    let waits = wait_table_given(&solved, &opts.adaptive.chain)?;
    let residual = ne_residual(&sigma, &waits, SUPPORT_EPS);
    Ok(EquilibriumResult {
        sigma_star: sigma,
        wait_table: waits,
        residual,
        iterations,
        method,
        converged: true,
    })
}

/// Find the queue-joining equilibria of a two-type market under a two-queue
/// policy (ACR or RCR layout).
///
/// Joining their own queue is dominant for specialized agents, so the search
/// space is the flexible agents' probability `sigma01` of joining queue 1.
/// The wait gap `D(s) = E[W_00] - E[W_01]` is scanned on a grid; every sign
/// change is refined by bisection, and the corners are classified as
/// equilibria by the sign of `D` there. All equilibria found are returned.
/// When `|D|` stays below tolerance across the whole grid every profile is
/// near-indifferent; the corners are returned tagged as a degenerate band.
pub fn solve_scalar_two_type(
    params: &MarketParams,
    policy: &PolicySpec,
    opts: &ScalarOptions,
) -> Result<Vec<EquilibriumResult>> {
    if params.ell() != 1 {
        return Err(Error::InvalidInput(
            "the scalar solver needs exactly two agent types".into(),
        ));
    }
    if policy.num_queues() != 2
        || policy.queue_index(0).is_none()
        || policy.queue_index(1).is_none()
    {
        return Err(Error::InvalidInput(
            "the scalar solver needs the two-queue policy layout {0, 1}".into(),
        ));
    }
    if opts.grid < 2 {
        return Err(Error::InvalidInput("need at least two grid points".into()));
    }

    let n = opts.grid;
    let points: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let mut gaps = Vec::with_capacity(n);
    for &s in &points {
        gaps.push(flexible_wait_gap(params, policy, s, &opts.adaptive)?.0);
    }

    let mut results: Vec<EquilibriumResult> = Vec::new();
    let band = gaps.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if band <= opts.tol {
        // every profile is an equilibrium to tolerance; report the corners
        for s in [0.0, 1.0] {
            results.push(finish_scalar(
                params,
                policy,
                s,
                "degenerate-band",
                n,
                opts,
            )?);
        }
        return Ok(results);
    }

    // corner equilibria
    if gaps[0] <= 0.0 {
        results.push(finish_scalar(params, policy, 0.0, "corner", n, opts)?);
    }
    if gaps[n - 1] >= 0.0 {
        results.push(finish_scalar(params, policy, 1.0, "corner", n, opts)?);
    }

    // interior sign changes, refined by bisection on the wait gap
    for k in 0..n - 1 {
        let (mut lo, mut hi) = (points[k], points[k + 1]);
        let (mut dlo, dhi) = (gaps[k], gaps[k + 1]);
        if dlo == 0.0 || dlo.signum() == dhi.signum() {
            continue;
        }
        let mut evals = n;
        let mut root = 0.5 * (lo + hi);
        for _ in 0..opts.max_bisections {
            root = 0.5 * (lo + hi);
            let (d, _) = flexible_wait_gap(params, policy, root, &opts.adaptive)?;
            evals += 1;
            if d.abs() <= opts.tol || hi - lo < 1e-12 {
                break;
            }
            if d.signum() == dlo.signum() {
                lo = root;
                dlo = d;
            } else {
                hi = root;
            }
        }
        results.push(finish_scalar(
            params,
            policy,
            root,
            "bisection",
            evals,
            opts,
        )?);
    }

    results.sort_by(|a, b| a.sigma_star.get(0, 1).total_cmp(&b.sigma_star.get(0, 1)));
    results.dedup_by(|a, b| (a.sigma_star.get(0, 1) - b.sigma_star.get(0, 1)).abs() < 1e-9);
    Ok(results)
}

/// Options for the damped projected fixed-point iteration.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionOptions {
    pub step: f64,
    pub damping: f64,
    pub max_iter: usize,
    /// Stop when the equilibrium residual (time units) drops below this.
    pub tol: f64,
    pub adaptive: AdaptiveOptions,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            step: 1.0,
            damping: 0.5,
            max_iter: 500,
            tol: 1e-6,
            adaptive: AdaptiveOptions::default(),
        }
    }
}

/// Rescale one type's waits to `[0, 1]`: infinite entries become max finite
/// plus one, then the row is shifted and scaled. Affine per-type rescaling
/// preserves the equilibrium condition, which only compares waits within a
/// type.
fn rescaled_row(row: &[Option<f64>]) -> Vec<f64> {
    let max_finite = row
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_finite.is_finite() {
        return vec![0.0; row.len()];
    }
    let filled: Vec<f64> = row.iter().map(|w| w.unwrap_or(max_finite + 1.0)).collect();
    let lo = filled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = filled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-300 {
        return vec![0.0; row.len()];
    }
    filled.iter().map(|w| (w - lo) / (hi - lo)).collect()
}

/// Damped projected fixed-point iteration on
/// `sigma <- (1 - damping) sigma + damping P(sigma - step W~(sigma))`,
/// where `W~` is the per-type rescaled wait table and `P` projects each row
/// onto the simplex. Non-convergence returns the best iterate with its
/// residual and the `converged` flag cleared, not an error.
pub fn solve_projection(
    params: &MarketParams,
    policy: &PolicySpec,
    sigma_init: &StrategyProfile,
    opts: &ProjectionOptions,
) -> Result<EquilibriumResult> {
    sigma_init.validate_for(policy, params.ell())?;
    let mut sigma = sigma_init.clone();
    let mut best: Option<EquilibriumResult> = None;
    for iter in 0..=opts.max_iter {
        let solved = solve_chain_adaptive(params, policy, &sigma, &opts.adaptive)?;
        let waits = wait_table_given(&solved, &opts.adaptive.chain)?;
        let residual = ne_residual(&sigma, &waits, SUPPORT_EPS);
        let improved = best.as_ref().map_or(true, |b| residual < b.residual);
        if improved {
            best = Some(EquilibriumResult {
                sigma_star: sigma.clone(),
                wait_table: waits.clone(),
                residual,
                iterations: iter,
                method: "projection",
                converged: residual <= opts.tol,
            });
        }
        if residual <= opts.tol || iter == opts.max_iter {
            break;
        }
        let mut rows = Vec::with_capacity(params.num_types());
        for i in 0..params.num_types() {
            let w = rescaled_row(waits.row(i));
            let mut y: Vec<f64> = sigma
                .row(i)
                .iter()
                .zip(&w)
                .map(|(s, w)| s - opts.step * w)
                .collect();
            project_row_simplex(&mut y);
            let row: Vec<f64> = sigma
                .row(i)
                .iter()
                .zip(&y)
                .map(|(s, p)| (1.0 - opts.damping) * s + opts.damping * p)
                .collect();
            rows.push(row);
        }
        // renormalize against accumulated roundoff
        for row in &mut rows {
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        sigma = StrategyProfile::new(rows)?;
    }
    Ok(best.expect("at least one iterate"))
}

/// One row of the ACR/RCR equilibrium comparison: the extremal equilibria
/// and the exact throughput at each.
#[derive(Debug, Clone)]
pub struct BraessPoint {
    /// Smallest ACR equilibrium `sigma_01`.
    pub sigma_acr: f64,
    /// Largest RCR equilibrium `sigma_01`.
    pub sigma_rcr: f64,
    pub tp_acr: f64,
    pub tp_rcr: f64,
    pub acr_residual: f64,
    pub rcr_residual: f64,
}

/// Compare ACR and RCR equilibria on one two-type market, using the
/// documented extremal selection: the smallest ACR equilibrium against the
/// largest RCR equilibrium (the pair the weak ordering is guaranteed for).
pub fn braess_point(params: &MarketParams, opts: &ScalarOptions) -> Result<BraessPoint> {
    let acr = crate::model::make_acr(1);
    let rcr = crate::model::make_rcr(1, false);
    let eq_acr = solve_scalar_two_type(params, &acr, opts)?;
    let eq_rcr = solve_scalar_two_type(params, &rcr, opts)?;
    if eq_acr.is_empty() || eq_rcr.is_empty() {
        return Err(Error::InvalidInput(
            "no equilibrium bracketed; refine the scan grid".into(),
        ));
    }
    let first = &eq_acr[0];
    let last = &eq_rcr[eq_rcr.len() - 1];
    let sigma_acr = first.sigma_star.get(0, 1);
    let sigma_rcr = last.sigma_star.get(0, 1);
    let tp_acr =
        solve_chain_adaptive(params, &acr, &first.sigma_star, &opts.adaptive)?.throughput()?;
    let tp_rcr =
        solve_chain_adaptive(params, &rcr, &last.sigma_star, &opts.adaptive)?.throughput()?;
    Ok(BraessPoint {
        sigma_acr,
        sigma_rcr,
        tp_acr,
        tp_rcr,
        acr_residual: first.residual,
        rcr_residual: last.residual,
    })
}

/// The comparison table over a grid of markets (the Braess sweep backend).
pub fn braess_comparison(grid: &[MarketParams], opts: &ScalarOptions) -> Result<Vec<BraessPoint>> {
    use rayon::prelude::*;
    grid.par_iter().map(|p| braess_point(p, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_acr, make_ncr};

    fn fig4(mu0: f64) -> MarketParams {
        MarketParams::new(vec![40.0, 60.0], vec![mu0, 40.0], 4.0).unwrap()
    }

    fn quick_opts() -> ScalarOptions {
        let mut o = ScalarOptions::default();
        o.grid = 7;
        o.tol = 1e-4;
        o.adaptive.tail_target = 1e-7;
        o
    }

    #[test]
    fn small_mu0_all_flexible_agents_switch() {
        let results = solve_scalar_two_type(&fig4(1.0), &make_acr(1), &quick_opts()).unwrap();
        assert_eq!(results.len(), 1, "unique equilibrium expected");
        assert_eq!(results[0].sigma_star.get(0, 1), 1.0);
        assert!(results[0].residual <= 1e-9);
    }

    #[test]
    fn large_mu0_flexible_agents_stay() {
        let results = solve_scalar_two_type(&fig4(60.0), &make_acr(1), &quick_opts()).unwrap();
        assert_eq!(results[0].sigma_star.get(0, 1), 0.0);
    }

    #[test]
    fn ncr_profile_verifies_trivially() {
        let params = fig4(30.0);
        let report = verify_ne(
            &params,
            &make_ncr(1),
            &StrategyProfile::single_queue(1),
            SUPPORT_EPS,
            1e-9,
        )
        .unwrap();
        assert!(report.ok);
        assert_eq!(report.residual, 0.0);
    }

    #[test]
    fn non_equilibrium_has_positive_residual() {
        // at small mu0 every flexible agent strictly prefers queue 1
        let params = fig4(1.0);
        let report = verify_ne(
            &params,
            &make_acr(1),
            &StrategyProfile::two_type(0.0).unwrap(),
            SUPPORT_EPS,
            1e-6,
        )
        .unwrap();
        assert!(!report.ok);
        assert!(report.residual > 0.1);
    }

    #[test]
    fn projection_agrees_with_scalar_solver() {
        let params = fig4(1.0);
        let mut opts = ProjectionOptions::default();
        opts.adaptive.tail_target = 1e-7;
        opts.tol = 1e-5;
        let r = solve_projection(
            &params,
            &make_acr(1),
            &StrategyProfile::two_type(0.7).unwrap(),
            &opts,
        )
        .unwrap();
        assert!(r.converged, "residual {}", r.residual);
        assert!(
            r.sigma_star.get(0, 1) > 0.999,
            "sigma = {}",
            r.sigma_star.get(0, 1)
        );
    }

    #[test]
    fn uniform_wait_rows_are_fixed_points_of_one_step() {
        // if all waits in a row are equal the rescaled row is zero and the
        // update leaves the profile unchanged
        let row = vec![Some(0.3), Some(0.3), Some(0.3)];
        assert_eq!(rescaled_row(&row), vec![0.0, 0.0, 0.0]);
    }
}
