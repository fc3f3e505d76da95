//! Scripted parameter sweeps and theorem-level property suites.
//!
//! Every sweep is a pure function of its configuration and seed; output CSVs
//! are byte-stable across runs and each artifact gets a manifest recording
//! the configuration hash, seed, and crate version.

mod manifest;

pub use manifest::{fnv1a_hex, Manifest};

use crate::ctmc::{poisson_truncation_cap, solve_chain_adaptive, AdaptiveOptions};
use crate::equilibrium::{braess_point, BraessPoint, ScalarOptions};
use crate::model::{
    make_acr, make_ncr, make_rcr, MarketParams, PatienceModel, PolicyKind, StrategyProfile,
    SystemState,
};
use crate::sim::{coupled_value_of_flexibility, EventStream};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

/// A one-parameter sweep description.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: MarketParams,
    pub swept: SweptParam,
    pub grid: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub scalar: ScalarOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptParam {
    Mu0,
    Lambda0,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidInput("sweep grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn market_at(&self, value: f64) -> Result<MarketParams> {
        let mut lambda = self.base.lambdas().to_vec();
        let mut mu = self.base.mus().to_vec();
        match self.swept {
            SweptParam::Mu0 => mu[0] = value,
            SweptParam::Lambda0 => lambda[0] = value,
        }
        Ok(MarketParams::new(lambda, mu, self.base.theta())?.with_patience(*self.base.patience()))
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1).max(1) as f64)
        .collect()
}

fn write_rows(
    out: Option<&Path>,
    kind: &str,
    seed: u64,
    config: String,
    header: &str,
    rows: &[String],
) -> Result<()> {
    let Some(path) = out else { return Ok(()) };
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
        w.flush()?;
    }
    Manifest::new(kind, seed, config, rows.len()).write_next_to(path)?;
    Ok(())
}

/// One row of the throughput-versus-`mu_0` comparison.
#[derive(Debug, Clone)]
pub struct Fig47Row {
    pub mu0: f64,
    pub fb: f64,
    pub tp_ncr: f64,
    pub tp_acr: f64,
    pub tp_rcr: f64,
    pub sigma_acr: f64,
    pub sigma_rcr: f64,
    pub frac_ncr: f64,
    pub frac_acr: f64,
    pub frac_rcr: f64,
}

const FIG47_HEADER: &str =
    "mu0,fb_tp,tp_ncr,tp_acr_eq,tp_rcr_eq,sigma_acr,sigma_rcr,frac_ncr,frac_acr,frac_rcr";

fn fig47_row_csv(r: &Fig47Row) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.mu0,
        r.fb,
        r.tp_ncr,
        r.tp_acr,
        r.tp_rcr,
        r.sigma_acr,
        r.sigma_rcr,
        r.frac_ncr,
        r.frac_acr,
        r.frac_rcr
    )
}

/// Default sweep over `mu_0` at the figure parameters: arrivals 40 and 60,
/// `mu_1 = 40`, `theta = 4`, 61 points on `[0.05, 60]`.
pub fn fig4_7_spec(points: usize) -> SweepSpec {
    SweepSpec {
        base: MarketParams::new(vec![40.0, 60.0], vec![30.0, 40.0], 4.0)
            .expect("figure parameters are valid"),
        swept: SweptParam::Mu0,
        grid: linspace(0.05, 60.0, points),
        policies: vec![PolicyKind::Ncr, PolicyKind::Acr, PolicyKind::Rcr],
        scalar: ScalarOptions::default(),
    }
}

/// Throughput of the three policies against the full-information first best
/// across `mu_0`, with equilibrium joining probabilities. First best is
/// exact ACR under truthful joining; the ACR column uses its smallest
/// equilibrium and the RCR column its largest.
pub fn sweep_fig4_7(out: Option<&Path>, spec: &SweepSpec) -> Result<Vec<Fig47Row>> {
    spec.validate()?;
    let rows: Vec<Fig47Row> = spec
        .grid
        .par_iter()
        .map(|&mu0| -> Result<Fig47Row> {
            let params = spec.market_at(mu0)?;
            let bp = braess_point(&params, &spec.scalar)?;
            let fb = solve_chain_adaptive(
                &params,
                &make_acr(1),
                &StrategyProfile::truthful(1),
                &spec.scalar.adaptive,
            )?
            .throughput()?;
            let tp_ncr = solve_chain_adaptive(
                &params,
                &make_ncr(1),
                &StrategyProfile::single_queue(1),
                &spec.scalar.adaptive,
            )?
            .throughput()?;
            Ok(Fig47Row {
                mu0,
                fb,
                tp_ncr,
                tp_acr: bp.tp_acr,
                tp_rcr: bp.tp_rcr,
                sigma_acr: bp.sigma_acr,
                sigma_rcr: bp.sigma_rcr,
                frac_ncr: tp_ncr / fb,
                frac_acr: bp.tp_acr / fb,
                frac_rcr: bp.tp_rcr / fb,
            })
        })
        .collect::<Result<_>>()?;
    let csv: Vec<String> = rows.iter().map(fig47_row_csv).collect();
    let config = format!(
        "fig4_7 base=(40,60;mu1=40;theta=4) grid={:?}",
        (spec.grid.first(), spec.grid.last(), spec.grid.len())
    );
    write_rows(out, "fig4_7", 0, config, FIG47_HEADER, &csv)?;
    Ok(rows)
}

/// One row of the Braess comparison across `lambda_0`.
#[derive(Debug, Clone)]
pub struct Fig6Row {
    pub lambda0: f64,
    pub fb: f64,
    pub point: BraessPoint,
}

const FIG6_HEADER: &str = "lambda0,fb_tp,sigma_acr,sigma_rcr,tp_acr_eq,tp_rcr_eq,frac_acr,frac_rcr";

fn fig6_row_csv(r: &Fig6Row) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.lambda0,
        r.fb,
        r.point.sigma_acr,
        r.point.sigma_rcr,
        r.point.tp_acr,
        r.point.tp_rcr,
        r.point.tp_acr / r.fb,
        r.point.tp_rcr / r.fb
    )
}

/// Default sweep over `lambda_0`: `lambda_1 = 60`, `mu = (30, 40)`,
/// `theta = 4`, 61 points on `[0.05, 30]`.
pub fn fig6_spec(points: usize) -> SweepSpec {
    SweepSpec {
        base: MarketParams::new(vec![15.0, 60.0], vec![30.0, 40.0], 4.0)
            .expect("figure parameters are valid"),
        swept: SweptParam::Lambda0,
        grid: linspace(0.05, 30.0, points),
        policies: vec![PolicyKind::Acr, PolicyKind::Rcr],
        scalar: ScalarOptions::default(),
    }
}

/// ACR-versus-RCR equilibrium comparison across the flexible arrival rate.
pub fn sweep_fig6(out: Option<&Path>, spec: &SweepSpec) -> Result<Vec<Fig6Row>> {
    spec.validate()?;
    let rows: Vec<Fig6Row> = spec
        .grid
        .par_iter()
        .map(|&lambda0| -> Result<Fig6Row> {
            let params = spec.market_at(lambda0)?;
            let point = braess_point(&params, &spec.scalar)?;
            let fb = solve_chain_adaptive(
                &params,
                &make_acr(1),
                &StrategyProfile::truthful(1),
                &spec.scalar.adaptive,
            )?
            .throughput()?;
            Ok(Fig6Row { lambda0, fb, point })
        })
        .collect::<Result<_>>()?;
    let csv: Vec<String> = rows.iter().map(fig6_row_csv).collect();
    let config = format!(
        "fig6 base=(lambda1=60;mu=30,40;theta=4) grid={:?}",
        (spec.grid.first(), spec.grid.last(), spec.grid.len())
    );
    write_rows(out, "fig6", 0, config, FIG6_HEADER, &csv)?;
    Ok(rows)
}

/// One exact robustness comparison: RCR at a flexible strategy versus NCR.
#[derive(Debug, Clone)]
pub struct Thm2Row {
    pub ell: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta: f64,
    pub sigma0: Vec<f64>,
    pub tp_rcr: f64,
    pub tp_ncr: f64,
    pub gap: f64,
}

/// Aggregate outcome of the robustness grid.
#[derive(Debug, Clone)]
pub struct Thm2Report {
    pub rows: Vec<Thm2Row>,
    pub violations: usize,
    pub max_gap: f64,
    pub params_rejected: usize,
}

/// Options for the robustness grid.
#[derive(Debug, Clone)]
pub struct Thm2Options {
    pub n_params: usize,
    pub n_sigmas: usize,
    pub tolerance: f64,
    pub adaptive: AdaptiveOptions,
    /// Parameter draws whose predicted truncated space exceeds the adaptive
    /// budget are redrawn (and counted).
    pub max_redraws: usize,
}

impl Default for Thm2Options {
    fn default() -> Self {
        let mut adaptive = AdaptiveOptions::default();
        adaptive.chain.state_budget = 400_000;
        Self {
            n_params: 6,
            n_sigmas: 18,
            tolerance: 1e-9,
            adaptive,
            max_redraws: 500,
        }
    }
}

fn log_uniform(rng: &mut ChaCha12Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (lo.ln() + u * (hi / lo).ln()).exp()
}

/// Flexible strategies for the grid: corners and even mixes, then Dirichlet
/// draws (uniform on the simplex).
fn sigma0_set(ell: usize, n: usize, rng: &mut ChaCha12Rng) -> Vec<Vec<f64>> {
    let cols = ell + 1;
    let mut out: Vec<Vec<f64>> = Vec::new();
    if ell == 1 {
        let grid_n = (n * 3 / 4).max(2);
        for k in 0..grid_n {
            let s = k as f64 / (grid_n - 1) as f64;
            out.push(vec![1.0 - s, s]);
        }
    } else {
        for q in 0..cols {
            let mut v = vec![0.0; cols];
            v[q] = 1.0;
            out.push(v);
        }
        out.push(vec![1.0 / cols as f64; cols]);
    }
    while out.len() < n {
        // Dirichlet(1, ..., 1) via normalized exponentials
        let mut v: Vec<f64> = (0..cols)
            .map(|_| -libm::log(1.0 - rng.random::<f64>()))
            .collect();
        let total: f64 = v.iter().sum();
        for x in &mut v {
            *x /= total;
        }
        out.push(v);
    }
    out.truncate(n);
    out
}

fn rcr_profile(ell: usize, sigma0: &[f64]) -> Result<StrategyProfile> {
    let mut rows = vec![sigma0.to_vec()];
    for i in 1..=ell {
        let mut row = vec![0.0; ell + 1];
        row[i] = 1.0;
        rows.push(row);
    }
    StrategyProfile::new(rows)
}

/// Predicted truncated-space size for one (params, sigma) pair under RCR.
fn predicted_states(params: &MarketParams, sigma0: &[f64], tail: f64) -> f64 {
    let ncells = (sigma0.iter().filter(|s| **s > 0.0).count() + params.ell()) as f64;
    let per_cell_tail = tail / ncells;
    let mut product = 1.0f64;
    for s in sigma0 {
        if *s > 0.0 {
            let mean = params.lambda(0) * s / params.theta();
            product *= poisson_truncation_cap(mean, per_cell_tail) as f64 + 1.0;
        }
    }
    for i in 1..=params.ell() {
        let mean = params.lambda(i) / params.theta();
        product *= poisson_truncation_cap(mean, per_cell_tail) as f64 + 1.0;
    }
    product
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

const THM2_HEADER: &str = "ell,lambda,mu,theta,sigma0,tp_rcr,tp_ncr,gap";

/// Exact check that RCR weakly dominates NCR for any flexible strategy:
/// random markets (log-uniform rates in `[1, 100]`, theta in `[0.5, 10]`)
/// crossed with flexible strategies, specialized agents truthful. Draws
/// whose truncated chains would blow the state budget are rejected and
/// redrawn.
pub fn theorem2_grid(
    ell: usize,
    seed: u64,
    out: Option<&Path>,
    opts: &Thm2Options,
) -> Result<Thm2Report> {
    if !(1..=2).contains(&ell) {
        return Err(Error::InvalidInput("the grid covers ell in {1, 2}".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x7462_6d32);
    let sigmas = sigma0_set(ell, opts.n_sigmas, &mut rng);

    let mut params_list = Vec::with_capacity(opts.n_params);
    let mut rejected = 0usize;
    while params_list.len() < opts.n_params {
        if rejected > opts.max_redraws {
            return Err(Error::Capacity {
                required: usize::MAX,
                budget: opts.adaptive.chain.state_budget,
            });
        }
        let lambda: Vec<f64> = (0..=ell)
            .map(|_| log_uniform(&mut rng, 1.0, 100.0))
            .collect();
        let mu: Vec<f64> = (0..=ell)
            .map(|_| log_uniform(&mut rng, 1.0, 100.0))
            .collect();
        let theta = log_uniform(&mut rng, 0.5, 10.0);
        let params = MarketParams::new(lambda, mu, theta)?;
        let feasible = sigmas.iter().all(|s| {
            predicted_states(&params, s, opts.adaptive.tail_target)
                <= opts.adaptive.chain.state_budget as f64 / 2.0
        });
        if feasible {
            params_list.push(params);
        } else {
            rejected += 1;
        }
    }

    let cases: Vec<(usize, usize)> = (0..params_list.len())
        .flat_map(|p| (0..sigmas.len()).map(move |s| (p, s)))
        .collect();
    let rows: Vec<Thm2Row> = cases
        .par_iter()
        .map(|&(p, s)| -> Result<Thm2Row> {
            let params = &params_list[p];
            let sigma0 = &sigmas[s];
            let tp_ncr = solve_chain_adaptive(
                params,
                &make_ncr(ell),
                &StrategyProfile::single_queue(ell),
                &opts.adaptive,
            )?
            .throughput()?;
            let tp_rcr = solve_chain_adaptive(
                params,
                &make_rcr(ell, false),
                &rcr_profile(ell, sigma0)?,
                &opts.adaptive,
            )?
            .throughput()?;
            Ok(Thm2Row {
                ell,
                lambda: params.lambdas().to_vec(),
                mu: params.mus().to_vec(),
                theta: params.theta(),
                sigma0: sigma0.clone(),
                tp_rcr,
                tp_ncr,
                gap: tp_rcr - tp_ncr,
            })
        })
        .collect::<Result<_>>()?;

    let violations = rows.iter().filter(|r| r.gap < -opts.tolerance).count();
    let max_gap = rows.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
    let csv: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.ell,
                fmt_vec(&r.lambda),
                fmt_vec(&r.mu),
                r.theta,
                fmt_vec(&r.sigma0),
                r.tp_rcr,
                r.tp_ncr,
                r.gap
            )
        })
        .collect();
    let config = format!(
        "thm2 ell={ell} n_params={} n_sigmas={} seed={seed}",
        opts.n_params, opts.n_sigmas
    );
    write_rows(out, "thm2", seed, config, THM2_HEADER, &csv)?;
    Ok(Thm2Report {
        rows,
        violations,
        max_gap,
        params_rejected: rejected,
    })
}

/// One coupled-dominance case of the lemma suite.
#[derive(Debug, Clone)]
pub struct LemmaCase {
    pub kind: PolicyKind,
    pub patience: PatienceModel,
    pub base_state: Vec<(usize, usize, u64)>,
    pub horizon: f64,
    pub d1_mean: f64,
    pub d1_se: f64,
    pub d2_mean: f64,
    pub d2_se: f64,
    pub pass: bool,
}

/// Summary of the coupled value-of-flexibility suite.
#[derive(Debug, Clone)]
pub struct LemmaReport {
    pub cases: Vec<LemmaCase>,
    pub failures: usize,
}

/// Base states for one policy kind; the ACR/RCR states also spread flexible
/// agents into the specialized queue, where the RCR extra-agent comparison
/// happens.
fn lemma_base_states(kind: PolicyKind) -> Vec<Vec<(usize, usize, u64)>> {
    match kind {
        PolicyKind::Ncr => vec![
            vec![],
            vec![(0, 0, 1)],
            vec![(1, 0, 3)],
            vec![(0, 0, 2), (1, 0, 3)],
            vec![(0, 0, 5), (1, 0, 5)],
            vec![(0, 0, 1), (1, 0, 4)],
            vec![(0, 0, 3), (1, 0, 1)],
            vec![(1, 0, 1)],
            vec![(0, 0, 2)],
            vec![(0, 0, 4), (1, 0, 4)],
        ],
        PolicyKind::Acr | PolicyKind::Rcr => vec![
            vec![],
            vec![(0, 0, 1)],
            vec![(1, 1, 3)],
            vec![(0, 0, 2), (1, 1, 3)],
            vec![(0, 0, 5), (1, 1, 5)],
            vec![(0, 1, 2), (1, 1, 3)],
            vec![(0, 0, 1), (0, 1, 1), (1, 1, 4)],
            vec![(0, 1, 3)],
            vec![(0, 0, 3), (1, 1, 1)],
            vec![(0, 0, 2), (0, 1, 2), (1, 1, 2)],
        ],
    }
}

/// Run the coupled dominance comparisons for ACR, NCR, and RCR across base
/// states, horizons `1/theta` and `10/theta`, and both patience models.
/// A case passes when both paired differences sit above minus three standard
/// errors.
pub fn lemma_suite(seed: u64, replications: usize, out: Option<&Path>) -> Result<LemmaReport> {
    let base_params = MarketParams::new(vec![40.0, 60.0], vec![15.0, 40.0], 4.0)?;
    let theta = base_params.theta();
    let patiences = [
        PatienceModel::Perfect,
        PatienceModel::MaxRejections { k: 1 },
    ];
    let mut configs = Vec::new();
    for kind in [PolicyKind::Acr, PolicyKind::Ncr, PolicyKind::Rcr] {
        for patience in patiences {
            for state in lemma_base_states(kind) {
                for horizon in [1.0 / theta, 10.0 / theta] {
                    configs.push((kind, patience, state.clone(), horizon));
                }
            }
        }
    }

    let cases: Vec<LemmaCase> = configs
        .par_iter()
        .enumerate()
        .map(
            |(idx, (kind, patience, state, horizon))| -> Result<LemmaCase> {
                let params = base_params.clone().with_patience(*patience);
                let sigma = match kind {
                    PolicyKind::Ncr => StrategyProfile::single_queue(1),
                    _ => StrategyProfile::truthful(1),
                };
                let r = coupled_value_of_flexibility(
                    &params,
                    *kind,
                    &sigma,
                    &SystemState::from_cells(state),
                    1,
                    *horizon,
                    replications,
                    &EventStream::new(seed ^ ((idx as u64) << 20)),
                )?;
                let d1 = r.one_plus_base_minus_flexible;
                let d2 = r.flexible_minus_specialized;
                let pass = d1.mean >= -3.0 * d1.std_err && d2.mean >= -3.0 * d2.std_err;
                Ok(LemmaCase {
                    kind: *kind,
                    patience: *patience,
                    base_state: state.clone(),
                    horizon: *horizon,
                    d1_mean: d1.mean,
                    d1_se: d1.std_err,
                    d2_mean: d2.mean,
                    d2_se: d2.std_err,
                    pass,
                })
            },
        )
        .collect::<Result<_>>()?;

    let failures = cases.iter().filter(|c| !c.pass).count();
    let csv: Vec<String> = cases
        .iter()
        .map(|c| {
            let state = c
                .base_state
                .iter()
                .map(|(i, q, n)| format!("a{i}q{q}x{n}"))
                .collect::<Vec<_>>()
                .join("+");
            format!(
                "{},{:?},{},{},{},{},{},{},{}",
                c.kind.as_str(),
                c.patience,
                state,
                c.horizon,
                c.d1_mean,
                c.d1_se,
                c.d2_mean,
                c.d2_se,
                c.pass
            )
        })
        .collect();
    let config = format!("lemmas seed={seed} replications={replications}");
    write_rows(
        out,
        "lemmas",
        seed,
        config,
        "policy,patience,base_state,horizon,d1_mean,d1_se,d2_mean,d2_se,pass",
        &csv,
    )?;
    Ok(LemmaReport { cases, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_spec_validation() {
        let mut spec = fig4_7_spec(5);
        spec.validate().unwrap();
        spec.grid = vec![];
        assert!(spec.validate().is_err());
        spec.grid = vec![1.0, 1.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn linspace_hits_both_ends() {
        let g = linspace(0.05, 60.0, 61);
        assert_eq!(g.len(), 61);
        assert!((g[0] - 0.05).abs() < 1e-15);
        assert!((g[60] - 60.0).abs() < 1e-12);
    }

    #[test]
    fn sigma0_sets_are_row_stochastic() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for ell in [1usize, 2] {
            for v in sigma0_set(ell, 12, &mut rng) {
                assert_eq!(v.len(), ell + 1);
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
