use aois_core::scheduler::{search_alpha, search_lengths};
use proptest::prelude::*;

fn dyadic(max: u32) -> impl Strategy<Value = f64> {
    (0..=max).prop_map(|k| k as f64 / 4.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn shifting_both_branches_of_a_user_keeps_the_actuation(
        n in 1usize..5,
        data in prop::collection::vec((dyadic(12), dyadic(8), dyadic(4), dyadic(8)), 4),
        c_max in dyadic(4),
        omega in dyadic(8),
        shift in dyadic(16),
        who in 0usize..4,
    ) {
        let data = &data[..n];
        let q: Vec<f64> = data.iter().map(|d| d.0).collect();
        let c: Vec<f64> = data.iter().map(|d| d.1).collect();
        let tx: Vec<f64> = data.iter().map(|d| d.2).collect();
        let skip: Vec<f64> = data.iter().map(|d| d.3).collect();
        let (a, value) = search_alpha(&q, &c, c_max, omega, &tx, &skip, 16).unwrap();
        let (mut tx2, mut skip2) = (tx.clone(), skip.clone());
        tx2[who % n] += shift;
        skip2[who % n] += shift;
        let (b, value2) = search_alpha(&q, &c, c_max, omega, &tx2, &skip2, 16).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(value2, value + omega * shift);
    }

    #[test]
    fn chosen_lengths_are_feasible_whenever_some_length_is(
        obj in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..4),
        rates in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let set = [2usize, 4, 8];
        let bt = 8.0;
        let got = search_lengths(&obj, &rates[..obj.len()], bt, 1.0, &set).unwrap();
        for (i, &l) in got.lengths.iter().enumerate() {
            let any = set.iter().any(|&s| rates[i] + 1e-9 >= s as f64 / bt);
            if any {
                prop_assert!(got.feasible[i]);
                prop_assert!(rates[i] + 1e-9 >= l as f64 / bt);
            } else {
                prop_assert_eq!(l, 2);
                prop_assert!(!got.feasible[i]);
            }
        }
    }
}

#[test]
fn empty_queues_and_cheaper_transmission_activate_everyone() {
    let (a, _) = search_alpha(&[0.0; 3], &[1.0; 3], 0.5, 1.0, &[0.1; 3], &[1.0; 3], 16).unwrap();
    assert_eq!(a, vec![true; 3]);
}

#[test]
fn too_many_users_for_exhaustive_search_is_rejected() {
    assert!(search_alpha(&[0.0; 17], &[1.0; 17], 0.5, 1.0, &[0.0; 17], &[0.0; 17], 16).is_err());
}
