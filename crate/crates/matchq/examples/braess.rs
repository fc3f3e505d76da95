//! Compare ACR and RCR equilibria on one two-type market: when flexible
//! agents are scarce, the extra dispatch edges of RCR pull them all into the
//! specialized queue and equilibrium throughput lands below ACR's.
//!
//! Run with: cargo run --release --example braess

use matchq::ctmc::{solve_chain_adaptive, AdaptiveOptions};
use matchq::equilibrium::{braess_point, ScalarOptions};
use matchq::model::{make_acr, MarketParams, StrategyProfile};

fn main() -> matchq::Result<()> {
    for lambda0 in [2.0, 10.0, 25.0] {
        let params = MarketParams::new(vec![lambda0, 60.0], vec![30.0, 40.0], 4.0)?;
        let point = braess_point(&params, &ScalarOptions::default())?;
        let first_best = solve_chain_adaptive(
            &params,
            &make_acr(1),
            &StrategyProfile::truthful(1),
            &AdaptiveOptions::default(),
        )?
        .throughput()?;
        println!(
            "lambda0 = {lambda0:5.1}: sigma_acr = {:.3}, sigma_rcr = {:.3}, \
             TP acr/rcr = {:.3}/{:.3} (first best {:.3})",
            point.sigma_acr, point.sigma_rcr, point.tp_acr, point.tp_rcr, first_best
        );
    }
    Ok(())
}
