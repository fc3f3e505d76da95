//! Birth-death first-passage solves and the queue-1 wait bound they imply.

use super::chain::stationary_of_generator;
use super::linalg::Csr;
use crate::model::MarketParams;
use crate::{Error, Result};

/// A birth-death chain on `0..=cap` with absorption: from state `n` the chain
/// moves up at `up[n]`, down at `down[n]`, or is absorbed at `absorb[n]`.
#[derive(Debug, Clone)]
pub struct BirthDeathSpec {
    up: Vec<f64>,
    down: Vec<f64>,
    absorb: Vec<f64>,
}

impl BirthDeathSpec {
    pub fn from_fns(
        cap: usize,
        up: impl Fn(u64) -> f64,
        down: impl Fn(u64) -> f64,
        absorb: impl Fn(u64) -> f64,
    ) -> Result<Self> {
        if cap < 1 {
            return Err(Error::InvalidInput("birth-death cap must be >= 1".into()));
        }
        let collect = |f: &dyn Fn(u64) -> f64, name: &str| -> Result<Vec<f64>> {
            (0..=cap as u64)
                .map(|n| {
                    let r = f(n);
                    if r.is_finite() && r >= 0.0 {
                        Ok(r)
                    } else {
                        Err(Error::InvalidInput(format!("{name}({n}) = {r} invalid")))
                    }
                })
                .collect()
        };
        let spec = Self {
            up: collect(&up, "up")?,
            down: collect(&down, "down")?,
            absorb: collect(&absorb, "absorb")?,
        };
        if spec.down[0] != 0.0 {
            return Err(Error::InvalidInput(
                "down(0) must be zero; departures from 0 are absorption".into(),
            ));
        }
        Ok(spec)
    }

    pub fn cap(&self) -> usize {
        self.up.len() - 1
    }
}

/// Expected first-passage (absorption) times `E[tau(n)]` for `n = 0..=cap`.
///
/// Solves the tridiagonal system
/// `(up_n + down_n + absorb_n) tau_n = 1 + up_n tau_{n+1} + down_n tau_{n-1}`
/// exactly, with the boundary closed by reflecting (`up(cap) = 0`).
pub fn solve_birth_death_passage(spec: &BirthDeathSpec) -> Result<Vec<f64>> {
    let cap = spec.cap();
    if spec.absorb.iter().all(|&a| a == 0.0) {
        return Err(Error::NoAbsorption);
    }
    let up_at = |n: usize| if n == cap { 0.0 } else { spec.up[n] };
    // Thomas elimination on the M-matrix; no pivoting needed.
    let n = cap + 1;
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![1.0; n];
    for i in 0..n {
        let total = up_at(i) + spec.down[i] + spec.absorb[i];
        if total <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "state {i} has no outgoing rate"
            )));
        }
        diag[i] = total;
        upper[i] = -up_at(i);
    }
    for i in 1..n {
        let lower = -spec.down[i];
        let factor = lower / diag[i - 1];
        diag[i] -= factor * upper[i - 1];
        rhs[i] -= factor * rhs[i - 1];
    }
    let mut tau = vec![0.0; n];
    tau[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        tau[i] = (rhs[i] - upper[i] * tau[i + 1]) / diag[i];
    }
    Ok(tau)
}

/// Product-form stationary distribution of a truncated birth-death chain:
/// `p_{n+1} down_{n+1} = p_n up_n`, normalized on `0..=cap`.
pub fn birth_death_product_form(up: &[f64], down: &[f64]) -> Result<Vec<f64>> {
    if up.len() != down.len() || up.is_empty() {
        return Err(Error::InvalidInput(
            "up and down must have equal nonzero length".into(),
        ));
    }
    let n = up.len();
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    for i in 1..n {
        if up[i - 1] == 0.0 {
            break;
        }
        if down[i] <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "down({i}) must be positive where up({}) > 0",
                i - 1
            )));
        }
        p[i] = p[i - 1] * up[i - 1] / down[i];
        if p[i] > 1e250 {
            // keep the running product in range; normalization fixes scale
            for v in p.iter_mut().take(i + 1) {
                *v /= 1e250;
            }
        }
    }
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    Ok(p)
}

/// Stationary distribution of the same truncated birth-death chain computed
/// through the generic linear-solve route, for cross-checking against the
/// product form.
pub fn birth_death_stationary_solver(up: &[f64], down: &[f64]) -> Result<Vec<f64>> {
    if up.len() != down.len() || up.is_empty() {
        return Err(Error::InvalidInput(
            "up and down must have equal nonzero length".into(),
        ));
    }
    let n = up.len();
    let rows = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(3);
            let mut out = 0.0;
            if i + 1 < n && up[i] > 0.0 {
                row.push((i + 1, up[i]));
                out += up[i];
            }
            if i > 0 && down[i] > 0.0 {
                row.push((i - 1, down[i]));
                out += down[i];
            }
            row.push((i, -out));
            row
        })
        .collect();
    let gen = Csr::from_rows(rows);
    let (p, _res) = stationary_of_generator(&gen, 1e-13, None)?;
    Ok(p)
}

/// Erlang-A (M/M/1+M) rates on `0..=cap`: arrivals `lambda`, service `mu`
/// whenever the queue is nonempty, abandonment `n theta`.
pub fn erlang_a_rates(lambda: f64, mu: f64, theta: f64, cap: usize) -> (Vec<f64>, Vec<f64>) {
    let up = vec![lambda; cap + 1];
    let down = (0..=cap as u64)
        .map(|n| if n == 0 { 0.0 } else { mu + n as f64 * theta })
        .collect();
    (up, down)
}

/// The two first-passage quantities behind the queue-1 wait comparison, and
/// the explicit lower bound on their gap.
///
/// `e_yc` is the stationary expected time until a type 1 job finds queue 1
/// empty; `e_w01` the stationary expected wait of a tagged flexible agent
/// joining queue 1; `gap` equals `p_0 (lambda_0 sigma_01 + lambda_1) g_1 /
/// (2 (mu_1 + theta))`.
#[derive(Debug, Clone, Copy)]
pub struct YcWaitGap {
    pub e_yc: f64,
    pub e_w01: f64,
    pub gap: f64,
}

/// Compute the queue-1 comparison on the two-type market under ACR with
/// flexible agents joining queue 1 with probability `sigma01`.
pub fn yc_wait_gap(params: &MarketParams, sigma01: f64, cap: usize) -> Result<YcWaitGap> {
    if params.ell() != 1 {
        return Err(Error::InvalidInput(
            "the queue-1 wait comparison is defined for two agent types".into(),
        ));
    }
    if !(0.0..=1.0).contains(&sigma01) {
        return Err(Error::InvalidInput(format!(
            "sigma01 = {sigma01} outside [0, 1]"
        )));
    }
    let arr = params.lambda(1) + params.lambda(0) * sigma01;
    let mu1 = params.mu(1);
    let theta = params.theta();

    let (up, down) = erlang_a_rates(arr, mu1, theta, cap);
    let p = birth_death_product_form(&up, &down)?;

    let yc_spec = BirthDeathSpec::from_fns(
        cap,
        |_| arr,
        |n| if n == 0 { 0.0 } else { mu1 + n as f64 * theta },
        |n| if n == 0 { mu1 } else { 0.0 },
    )?;
    let yc = solve_birth_death_passage(&yc_spec)?;

    let w_spec = BirthDeathSpec::from_fns(
        cap,
        |_| arr,
        |n| n as f64 * theta + n as f64 * mu1 / (n as f64 + 1.0),
        |n| mu1 / (n as f64 + 1.0),
    )?;
    let w01 = solve_birth_death_passage(&w_spec)?;

    let e_yc: f64 = p.iter().zip(&yc).map(|(pi, y)| pi * y).sum();
    let e_w01: f64 = p.iter().zip(&w01).map(|(pi, w)| pi * w).sum();
    let g1 = 1.0 / (arr + mu1 + theta);
    let gap = p[0] * arr * g1 / (2.0 * (mu1 + theta));
    Ok(YcWaitGap { e_yc, e_w01, gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorption_from_zero_with_no_births() {
        // up = 0 everywhere: from state 0 absorption happens at rate mu
        let spec = BirthDeathSpec::from_fns(
            4,
            |_| 0.0,
            |n| if n == 0 { 0.0 } else { 40.0 + n as f64 * 4.0 },
            |n| if n == 0 { 40.0 } else { 0.0 },
        )
        .unwrap();
        let tau = solve_birth_death_passage(&spec).unwrap();
        assert!((tau[0] - 1.0 / 40.0).abs() < 1e-14);
        // from n the chain must first walk down to 0
        assert!(tau[1] > tau[0]);
    }

    #[test]
    fn no_absorption_is_an_error() {
        let spec = BirthDeathSpec::from_fns(3, |_| 1.0, |n| n as f64, |_| 0.0).unwrap();
        assert!(matches!(
            solve_birth_death_passage(&spec),
            Err(Error::NoAbsorption)
        ));
    }

    #[test]
    fn passage_solution_satisfies_the_recursions() {
        let (arr, mu1, theta) = (70.0, 40.0, 4.0);
        let cap = 200;
        let spec = BirthDeathSpec::from_fns(
            cap,
            |_| arr,
            |n| n as f64 * theta + n as f64 * mu1 / (n as f64 + 1.0),
            |n| mu1 / (n as f64 + 1.0),
        )
        .unwrap();
        let tau = solve_birth_death_passage(&spec).unwrap();
        for n in 1..cap - 1 {
            let g = 1.0 / (arr + mu1 + n as f64 * theta);
            let down = n as f64 * theta + n as f64 * mu1 / (n as f64 + 1.0);
            let rhs = g + arr * g * tau[n + 1] + down * g * tau[n - 1];
            assert!(
                (tau[n] - rhs).abs() < 1e-9 * tau[n].max(1.0),
                "recursion violated at n={n}"
            );
        }
    }

    #[test]
    fn product_form_matches_solver_route() {
        let (up, down) = erlang_a_rates(70.0, 40.0, 4.0, 120);
        let product = birth_death_product_form(&up, &down).unwrap();
        let solved = birth_death_stationary_solver(&up, &down).unwrap();
        for (a, b) in product.iter().zip(&solved) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn yc_dominates_w01_levelwise_and_in_aggregate() {
        let params = MarketParams::new(vec![40.0, 60.0], vec![30.0, 40.0], 4.0).unwrap();
        for sigma01 in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let g = yc_wait_gap(&params, sigma01, 150).unwrap();
            assert!(g.gap > 0.0);
            assert!(
                g.e_yc - g.e_w01 >= g.gap - 1e-9,
                "sigma01={sigma01}: yc={} w01={} gap={}",
                g.e_yc,
                g.e_w01,
                g.gap
            );
        }
    }

    #[test]
    fn gap_vanishes_with_the_arrival_rates() {
        let params = MarketParams::new(vec![1e-7, 1e-6], vec![30.0, 40.0], 4.0).unwrap();
        let g = yc_wait_gap(&params, 1e-3, 40).unwrap();
        // p_0 -> 1 and the formula collapses to arr * g_1 / (2 (mu1 + theta))
        let arr = 1e-6 + 1e-7 * 1e-3;
        let expect = arr / (arr + 40.0 + 4.0) / (2.0 * 44.0);
        assert!((g.gap - expect).abs() < 1e-12);
        assert!(g.gap < 1e-8);
    }
}
