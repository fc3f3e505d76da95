//! Property tests for the invariants that hold on every input.

use matchq::equilibrium::project_row_simplex;
use matchq::model::{
    make_acr, make_ncr, make_rcr, resolve_dispatch, MarketParams, PatienceModel, SystemState,
};
use proptest::prelude::*;

fn arb_patience() -> impl Strategy<Value = PatienceModel> {
    prop_oneof![
        Just(PatienceModel::Perfect),
        (0u32..4).prop_map(|k| PatienceModel::MaxRejections { k }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dispatch_outcomes_form_a_distribution(
        counts in proptest::collection::vec(0u64..5, 6),
        job_type in 0usize..3,
        policy_pick in 0usize..4,
        patience in arb_patience(),
    ) {
        let params = MarketParams::new(
            vec![3.0, 5.0, 2.0],
            vec![4.0, 1.0, 2.0],
            1.5,
        ).unwrap().with_patience(patience);
        let policy = match policy_pick {
            0 => make_ncr(2),
            1 => make_acr(2),
            2 => make_rcr(2, false),
            _ => make_rcr(2, true),
        };
        // place the six counts on (type, queue) cells within the policy
        let queues = policy.queues().to_vec();
        let mut cells = Vec::new();
        for (k, &n) in counts.iter().enumerate() {
            let i = k % 3;
            let q = queues[k % queues.len()];
            cells.push((i, q, n));
        }
        let state = SystemState::from_cells(&cells);
        let dist = resolve_dispatch(&params, &policy, &state, job_type).unwrap();
        let total: f64 = dist.outcomes.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(dist.outcomes.iter().all(|(_, p)| (0.0..=1.0 + 1e-12).contains(p)));
    }

    #[test]
    fn patience_success_prob_is_monotone(
        k in 0u32..6,
        a in 0u64..10,
        extra in 0u64..10,
    ) {
        let b = a + extra;
        let model = PatienceModel::MaxRejections { k };
        let p = model.success_prob(a, b);
        prop_assert!((0.0..=1.0).contains(&p));
        if a > 0 {
            prop_assert!(p > 0.0);
            // more compatible agents never hurt
            prop_assert!(model.success_prob(a + 1, b + 1) >= p - 1e-15);
            // a larger pool at fixed compatibles never helps
            prop_assert!(model.success_prob(a, b + 1) <= p + 1e-15);
        } else {
            prop_assert!(p == 0.0);
        }
    }

    #[test]
    fn simplex_projection_lands_on_the_simplex(
        v in proptest::collection::vec(-10.0f64..10.0, 1..6),
    ) {
        let mut x = v.clone();
        project_row_simplex(&mut x);
        let sum: f64 = x.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(x.iter().all(|&p| p >= 0.0));
        // projection never moves a point already on the simplex
        let mut y = x.clone();
        project_row_simplex(&mut y);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
