//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS line with the measured numbers (visible with `--nocapture`).
//!
//! Determinism of the command-line artifacts is covered by the companion
//! suite in the CLI crate.

use matchq::ctmc::{
    birth_death_product_form, birth_death_stationary_solver, erlang_a_rates, full_info_throughput,
    solve_birth_death_passage, solve_chain_adaptive, yc_wait_gap, AdaptiveOptions, BirthDeathSpec,
};
use matchq::equilibrium::{solve_scalar_two_type, ScalarOptions};
use matchq::experiments::{
    fig4_7_spec, fig6_spec, lemma_suite, sweep_fig4_7, sweep_fig6, theorem2_grid, Thm2Options,
};
use matchq::model::{
    full_info_policy_table, make_acr, make_ncr, FullInfoKind, FullInfoTable, MarketParams,
    StrategyProfile,
};
use matchq::sim::{tagged_wait, EventStream};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

const SEED: u64 = 42;

fn fig4(mu0: f64) -> MarketParams {
    MarketParams::new(vec![40.0, 60.0], vec![mu0, 40.0], 4.0).unwrap()
}

fn log_uniform(rng: &mut ChaCha12Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (lo.ln() + u * (hi / lo).ln()).exp()
}

/// Criterion 1: the truncated stationary solver reproduces the M/M/1+M
/// product form to 1e-10 at caps up to 400, for 20 random rate draws, in
/// under five seconds.
#[test]
fn criterion_01_stationary_matches_product_form() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let lambda = log_uniform(&mut rng, 1.0, 100.0);
        let mu = log_uniform(&mut rng, 1.0, 100.0);
        let theta = log_uniform(&mut rng, 0.5, 10.0);
        let cap = [100usize, 200, 300, 400][k % 4];
        let (up, down) = erlang_a_rates(lambda, mu, theta, cap);
        let oracle = birth_death_product_form(&up, &down).unwrap();
        let solved = birth_death_stationary_solver(&up, &down).unwrap();
        let diff = oracle
            .iter()
            .zip(&solved)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(diff);
        assert!(
            diff <= 1e-10,
            "draw {k} (lambda={lambda:.3} mu={mu:.3} theta={theta:.3} cap={cap}): diff {diff:.3e}"
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:.2?}");
    println!("criterion 01 PASS: 20 draws, worst deviation {worst:.3e}, {elapsed:.2?}");
}

/// W01 under ACR by the one-dimensional recursion route: stationary queue-1
/// level distribution times tagged first-passage times.
fn w01_recursion(params: &MarketParams, sigma01: f64, cap: usize) -> f64 {
    let arr = params.lambda(1) + params.lambda(0) * sigma01;
    let mu1 = params.mu(1);
    let theta = params.theta();
    let (up, down) = erlang_a_rates(arr, mu1, theta, cap);
    let level_dist = birth_death_product_form(&up, &down).unwrap();
    let spec = BirthDeathSpec::from_fns(
        cap,
        |_| arr,
        |n| n as f64 * theta + n as f64 * mu1 / (n as f64 + 1.0),
        |n| mu1 / (n as f64 + 1.0),
    )
    .unwrap();
    let w = solve_birth_death_passage(&spec).unwrap();
    level_dist.iter().zip(&w).map(|(p, w)| p * w).sum()
}

/// Criterion 2: absorbing-chain W01 equals the recursion route to 1e-8
/// relative, and both match tagged-agent Monte Carlo within three standard
/// errors over ten thousand injections, within a minute.
#[test]
fn criterion_02_wait_cross_check() {
    let t0 = Instant::now();
    let params = fig4(30.0);
    let sigma01 = 0.5;
    let sigma = StrategyProfile::two_type(sigma01).unwrap();
    let policy = make_acr(1);

    let mut opts = AdaptiveOptions::default();
    opts.tail_target = 1e-11;
    let solved = solve_chain_adaptive(&params, &policy, &sigma, &opts).unwrap();
    let w01_absorbing = solved.wait(0, 1).unwrap().unwrap();
    let w01_rec = w01_recursion(&params, sigma01, 250);
    let rel = (w01_absorbing - w01_rec).abs() / w01_rec;
    assert!(
        rel <= 1e-8,
        "absorbing {w01_absorbing} vs recursion {w01_rec}: rel {rel:.3e}"
    );

    let mc = tagged_wait(
        &params,
        &policy,
        &sigma,
        0,
        1,
        10_000,
        5.0,
        &EventStream::new(SEED),
    )
    .unwrap();
    assert!(!mc.infinite);
    assert_eq!(mc.samples, 10_000);
    let z_abs = (mc.mean - w01_absorbing) / mc.std_err;
    let z_rec = (mc.mean - w01_rec) / mc.std_err;
    assert!(
        z_abs.abs() <= 3.0 && z_rec.abs() <= 3.0,
        "monte carlo {mc:?} vs {w01_absorbing}: z {z_abs:.2}"
    );

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:.2?}");
    println!(
        "criterion 02 PASS: routes agree to {rel:.2e} relative, monte carlo z = {z_abs:+.2}, {elapsed:.2?}"
    );
}

/// Criterion 3: the queue-1 first-passage comparison holds levelwise and in
/// aggregate with the explicit gap term, at the figure parameters across
/// five joining probabilities.
#[test]
fn criterion_03_first_passage_inequality() {
    let params = fig4(30.0);
    let cap = 200;
    for sigma01 in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let arr = params.lambda(1) + params.lambda(0) * sigma01;
        let mu1 = params.mu(1);
        let theta = params.theta();
        let yc_spec = BirthDeathSpec::from_fns(
            cap,
            |_| arr,
            |n| if n == 0 { 0.0 } else { mu1 + n as f64 * theta },
            |n| if n == 0 { mu1 } else { 0.0 },
        )
        .unwrap();
        let w_spec = BirthDeathSpec::from_fns(
            cap,
            |_| arr,
            |n| n as f64 * theta + n as f64 * mu1 / (n as f64 + 1.0),
            |n| mu1 / (n as f64 + 1.0),
        )
        .unwrap();
        let yc = solve_birth_death_passage(&yc_spec).unwrap();
        let w01 = solve_birth_death_passage(&w_spec).unwrap();
        for n in 0..=cap {
            assert!(
                yc[n] >= w01[n] - 1e-9,
                "sigma01={sigma01} n={n}: yc {} < w01 {}",
                yc[n],
                w01[n]
            );
        }
        let g = yc_wait_gap(&params, sigma01, cap).unwrap();
        assert!(g.gap > 0.0);
        assert!(
            g.e_yc - g.e_w01 >= g.gap - 1e-9,
            "sigma01={sigma01}: e_yc {} e_w01 {} gap {}",
            g.e_yc,
            g.e_w01,
            g.gap
        );
    }
    println!("criterion 03 PASS: levelwise and aggregate inequalities hold at 5 profiles");
}

/// Criterion 4: at mu0 in {1, 2} the scalar solver returns the unique
/// all-switch equilibrium; at mu0 = 5 the unique equilibrium is interior
/// (the exact switching threshold sits near 2.5); in all three cases
/// equilibrium ACR throughput trails NCR by more than 1e-4.
#[test]
fn criterion_04_acr_below_ncr_at_small_mu0() {
    let t0 = Instant::now();
    let opts = ScalarOptions::default();
    let mut summary = Vec::new();
    for mu0 in [1.0, 2.0, 5.0] {
        let params = fig4(mu0);
        let results = solve_scalar_two_type(&params, &make_acr(1), &opts).unwrap();
        assert_eq!(results.len(), 1, "mu0={mu0}: expected a unique equilibrium");
        let sigma_star = results[0].sigma_star.get(0, 1);
        if mu0 < 3.0 {
            assert_eq!(sigma_star, 1.0, "mu0={mu0}: all flexible agents switch");
        } else {
            assert!(
                (0.5..1.0).contains(&sigma_star),
                "mu0={mu0}: interior equilibrium expected, got {sigma_star}"
            );
        }
        let tp_acr = solve_chain_adaptive(
            &params,
            &make_acr(1),
            &results[0].sigma_star,
            &opts.adaptive,
        )
        .unwrap()
        .throughput()
        .unwrap();
        let tp_ncr = solve_chain_adaptive(
            &params,
            &make_ncr(1),
            &StrategyProfile::single_queue(1),
            &opts.adaptive,
        )
        .unwrap()
        .throughput()
        .unwrap();
        assert!(
            tp_acr < tp_ncr - 1e-4,
            "mu0={mu0}: tp_acr {tp_acr} not below tp_ncr {tp_ncr}"
        );
        summary.push(format!(
            "mu0={mu0}: sigma*={sigma_star:.4} ncr-acr={:.4}",
            tp_ncr - tp_acr
        ));
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:.2?}");
    println!("criterion 04 PASS: {}; {elapsed:.2?}", summary.join("; "));
}

/// Criterion 5: exact robustness grid with the pre-registered seed: no
/// dominance violations beyond 1e-9 over 108 two-type and 50 three-type
/// (market, strategy) pairs, with a strict gap at three types.
///
/// A known exact-model exception exists for adversarial three-type markets
/// (see the ordering characterization test in the consistency suite); the
/// seeded draw is fixed up front and not tuned around it.
#[test]
fn criterion_05_rcr_dominates_ncr_grid() {
    let t0 = Instant::now();
    let mut opts = Thm2Options::default();
    opts.n_params = 6;
    opts.n_sigmas = 18;
    let rep1 = theorem2_grid(1, SEED, None, &opts).unwrap();
    assert!(rep1.rows.len() >= 100);
    assert_eq!(
        rep1.violations,
        0,
        "two-type violations: {:?}",
        rep1.rows
            .iter()
            .filter(|r| r.gap < -1e-9)
            .collect::<Vec<_>>()
    );

    opts.n_params = 10;
    opts.n_sigmas = 5;
    let rep2 = theorem2_grid(2, SEED, None, &opts).unwrap();
    assert!(rep2.rows.len() >= 50);
    assert_eq!(
        rep2.violations,
        0,
        "three-type violations: {:?}",
        rep2.rows
            .iter()
            .filter(|r| r.gap < -1e-9)
            .collect::<Vec<_>>()
    );
    assert!(
        rep2.max_gap > 1e-6,
        "no strict separation found: max gap {:.3e}",
        rep2.max_gap
    );
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:.2?}");
    println!(
        "criterion 05 PASS: {}+{} pairs, 0 violations, three-type max gap {:.3e}, {elapsed:.2?}",
        rep1.rows.len(),
        rep2.rows.len(),
        rep2.max_gap
    );
}

/// Criterion 6: on the lambda-0 sweep the largest RCR equilibrium weakly
/// dominates the smallest ACR equilibrium at every grid point, and some
/// point shows equilibrium ACR throughput strictly above RCR.
#[test]
fn criterion_06_braess_ordering_on_fig6_grid() {
    let t0 = Instant::now();
    let spec = fig6_spec(61);
    let rows = sweep_fig6(None, &spec).unwrap();
    assert_eq!(rows.len(), 61);
    let mut acr_above = 0;
    for r in &rows {
        assert!(
            r.point.sigma_rcr >= r.point.sigma_acr - 1e-3,
            "lambda0={}: sigma_rcr {} < sigma_acr {}",
            r.lambda0,
            r.point.sigma_rcr,
            r.point.sigma_acr
        );
        if r.point.tp_acr > r.point.tp_rcr + 1e-9 {
            acr_above += 1;
        }
    }
    assert!(acr_above > 0, "no grid point had ACR above RCR");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:.2?}");
    println!(
        "criterion 06 PASS: ordering holds at 61 points, ACR above RCR at {acr_above}, {elapsed:.2?}"
    );
}

/// Criterion 7: coupled dominance of one extra flexible agent across
/// policies, base states, horizons, and both patience models, ten thousand
/// coupled replications per case.
#[test]
fn criterion_07_coupled_dominance_suite() {
    let t0 = Instant::now();
    let report = lemma_suite(SEED, 10_000, None).unwrap();
    let failing: Vec<String> = report
        .cases
        .iter()
        .filter(|c| !c.pass)
        .map(|c| {
            format!(
                "{:?}/{:?} T={} d1={:.4}+-{:.4} d2={:.4}+-{:.4}",
                c.kind, c.patience, c.horizon, c.d1_mean, c.d1_se, c.d2_mean, c.d2_se
            )
        })
        .collect();
    assert!(report.failures == 0, "failing cases: {failing:?}");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:.2?}");
    println!(
        "criterion 07 PASS: {} cases within 3 standard errors, {elapsed:.2?}",
        report.cases.len()
    );
}

/// The truncation bound of the chains in criterion 8: large enough that the
/// boundary carries ~1e-12 mass at the drawn rates, so the comparisons test
/// the policies rather than the truncation.
const C8_CHAIN_BOUND: u64 = 28;
/// Policies may deviate from ACR on states with every cell at or below this.
const C8_CHOICE_BOUND: u64 = 3;

fn acr_rule(a: &[u64], j: usize, nu: &mut [f64]) {
    if a[j] > 0 {
        nu[j] = 1.0;
    } else if a[0] > 0 {
        nu[0] = 1.0;
    } else {
        nu[2] = 1.0;
    }
}

/// All deterministic non-idling full-information policies that deviate from
/// ACR on the (enumerable) choice region: states with both cells in
/// `1..=C8_CHOICE_BOUND`, where a type 1 job has a real choice.
fn non_idling_tables() -> Vec<FullInfoTable> {
    let choice_states: Vec<Vec<u64>> = (1..=C8_CHOICE_BOUND)
        .flat_map(|a0| (1..=C8_CHOICE_BOUND).map(move |a1| vec![a0, a1]))
        .collect();
    let n = choice_states.len();
    (0..(1u32 << n))
        .map(|mask| {
            FullInfoTable::from_rule(1, C8_CHAIN_BOUND, |a, j, nu| {
                if j == 1 && a[0] > 0 && a[1] > 0 && a.iter().all(|&x| x <= C8_CHOICE_BOUND) {
                    let idx = choice_states.iter().position(|s| s == a).unwrap();
                    if mask >> idx & 1 == 1 {
                        nu[0] = 1.0;
                    } else {
                        nu[1] = 1.0;
                    }
                } else {
                    acr_rule(a, j, nu);
                }
            })
        })
        .collect()
}

/// A random deterministic admissible policy on the choice region (idling
/// allowed there), ACR beyond it.
fn random_table(rng: &mut ChaCha12Rng) -> FullInfoTable {
    let choices: Vec<u64> = (0..64).map(|_| rng.random()).collect();
    let mut k = 0usize;
    FullInfoTable::from_rule(1, C8_CHAIN_BOUND, |a, j, nu| {
        if a.iter().all(|&x| x <= C8_CHOICE_BOUND) {
            let mut actions = vec![2usize]; // reject
            if a[0] > 0 {
                actions.push(0);
            }
            if j == 1 && a[1] > 0 {
                actions.push(1);
            }
            let pick = actions[(choices[k % choices.len()] % actions.len() as u64) as usize];
            k += 1;
            nu[pick] = 1.0;
        } else {
            acr_rule(a, j, nu);
        }
    })
}

/// Criterion 8: exact ACR throughput weakly dominates every deterministic
/// non-idling policy deviating on the cells-at-most-3 region (exhaustive,
/// 512 policies) plus a seeded sample of idling ones, on five random
/// markets. The chains are truncated far beyond the choice region so the
/// comparison is free of boundary artifacts at the 1e-9 tolerance.
#[test]
fn criterion_08_acr_is_first_best_at_desk_scale() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(SEED ^ 0x0815);
    let competitors = non_idling_tables();
    assert_eq!(competitors.len(), 512);
    let mut worst = f64::INFINITY;
    for draw in 0..5 {
        let params = MarketParams::new(
            vec![
                log_uniform(&mut rng, 0.3, 2.5),
                log_uniform(&mut rng, 0.3, 2.5),
            ],
            vec![
                log_uniform(&mut rng, 0.3, 2.5),
                log_uniform(&mut rng, 0.3, 2.5),
            ],
            log_uniform(&mut rng, 1.0, 2.0),
        )
        .unwrap();
        let acr = full_info_policy_table(&params, FullInfoKind::Acr, C8_CHAIN_BOUND).unwrap();
        let tp_acr = full_info_throughput(&params, &acr).unwrap();
        for table in &competitors {
            let tp = full_info_throughput(&params, table).unwrap();
            worst = worst.min(tp_acr - tp);
            assert!(
                tp <= tp_acr + 1e-9,
                "draw {draw}: a non-idling policy beat ACR by {:.3e}",
                tp - tp_acr
            );
        }
        for _ in 0..400 {
            let table = random_table(&mut rng);
            let tp = full_info_throughput(&params, &table).unwrap();
            worst = worst.min(tp_acr - tp);
            assert!(
                tp <= tp_acr + 1e-9,
                "draw {draw}: an idling policy beat ACR by {:.3e}",
                tp - tp_acr
            );
        }
    }
    let elapsed = t0.elapsed();
    println!(
        "criterion 08 PASS: 5 markets x (512 exhaustive + 400 sampled) policies, worst margin {worst:.3e}, {elapsed:.2?}"
    );
}

/// Criterion 10: figure-shape checks on the mu0 sweep: all three
/// throughput fractions inside (0.9, 1.0], the ACR joining probability
/// nonincreasing, ACR near first best at both grid extremes and NCR at the
/// left one (the left extreme is where the small-mu0 limit carries a rate;
/// the exact NCR fraction at mu0 = 60 is 0.962).
#[test]
fn criterion_10_figure_shapes() {
    let t0 = Instant::now();
    let spec = fig4_7_spec(61);
    let rows = sweep_fig4_7(None, &spec).unwrap();
    assert_eq!(rows.len(), 61);
    for r in &rows {
        for (name, frac) in [
            ("ncr", r.frac_ncr),
            ("acr", r.frac_acr),
            ("rcr", r.frac_rcr),
        ] {
            assert!(
                frac > 0.9 && frac <= 1.0 + 1e-9,
                "mu0={}: {name} fraction {frac} outside (0.9, 1]",
                r.mu0
            );
        }
    }
    for pair in rows.windows(2) {
        assert!(
            pair[1].sigma_acr <= pair[0].sigma_acr + 1e-3,
            "sigma_acr increased from {} to {} at mu0={}",
            pair[0].sigma_acr,
            pair[1].sigma_acr,
            pair[1].mu0
        );
    }
    let (first, last) = (&rows[0], &rows[60]);
    assert!(
        first.frac_acr >= 0.995,
        "left extreme acr {}",
        first.frac_acr
    );
    assert!(
        first.frac_ncr >= 0.995,
        "left extreme ncr {}",
        first.frac_ncr
    );
    assert!(
        last.frac_acr >= 0.995,
        "right extreme acr {}",
        last.frac_acr
    );
    let elapsed = t0.elapsed();
    println!(
        "criterion 10 PASS: 61 rows shaped (ncr range {:.4}..{:.4}, right-extreme ncr {:.4}), {elapsed:.2?}",
        rows.iter().map(|r| r.frac_ncr).fold(f64::INFINITY, f64::min),
        rows.iter().map(|r| r.frac_ncr).fold(0.0, f64::max),
        last.frac_ncr
    );
}
