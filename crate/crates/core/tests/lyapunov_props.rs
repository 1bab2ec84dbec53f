use aois_core::lyapunov::{prop1_check, queue_update, QueueState};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn drift_bound_and_telescoping_hold_on_any_action_path(
        costs in prop::collection::vec(0.0f64..3.0, 1..5),
        c_max in 0.0f64..2.0,
        actions in prop::collection::vec(any::<u8>(), 1..200),
    ) {
        let mut state = QueueState::new(costs.clone(), c_max).unwrap();
        for bits in actions {
            let alphas: Vec<bool> = (0..costs.len()).map(|i| bits >> (i % 8) & 1 == 1).collect();
            let step = state.step(&alphas).unwrap();
            prop_assert!(step.holds());
            for i in 0..costs.len() {
                prop_assert!(state.queues[i] >= 0.0);
                prop_assert!(state.telescoping_slack(i) >= -1e-12);
            }
        }
    }

    #[test]
    fn queue_update_is_nonnegative_and_monotone(q in 0.0f64..10.0, dq in 0.0f64..5.0, c in 0.0f64..3.0, c_max in 0.0f64..3.0, a in any::<bool>()) {
        let low = queue_update(q, a, c, c_max);
        prop_assert!(low >= 0.0);
        prop_assert!(queue_update(q + dq, a, c, c_max) >= low);
    }
}

#[test]
fn silent_queues_stay_empty_and_report_stable() {
    let mut state = QueueState::new(vec![1.0, 2.0], 0.5).unwrap();
    for _ in 0..50 {
        state.step(&[false, false]).unwrap();
    }
    assert_eq!(state.queues, vec![0.0, 0.0]);
    let report = prop1_check(&state, 0.01, 0.0).unwrap();
    assert!(report.satisfied);
    assert_eq!(report.avg_cost, vec![0.0, 0.0]);
}
