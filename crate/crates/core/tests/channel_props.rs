use aois_core::channel::{apply_downlink_with_noise, downlink_signal, read_trace_csv, write_trace_csv, FadingProcess, PathLossConfig};
use aois_core::linalg::{sample_cn_matrix, sample_cn_vector, CMat, CVec, C64};
use aois_core::{BeamformerSet, ChannelState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64, users: usize, nr: usize, nt: usize, d: usize) -> (ChannelState, BeamformerSet, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = (0..users).map(|_| sample_cn_matrix(nr, nt, &mut rng)).collect();
    let channel = ChannelState::new(h, vec![0.1; users], vec![0.0; users], 0).unwrap();
    let v = (0..users).map(|_| sample_cn_matrix(nt, d, &mut rng)).collect();
    let u = (0..users).map(|_| sample_cn_matrix(nr, nr, &mut rng)).collect();
    (channel, BeamformerSet::new(v, u).unwrap(), rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn received_signal_is_linear_in_symbols(seed in any::<u64>(), users in 1usize..4, nr in 1usize..4, nt in 1usize..5, d in 1usize..3) {
        let (channel, bf, mut rng) = setup(seed, users, nr, nt, d);
        let a: Vec<CVec> = (0..users).map(|_| sample_cn_vector(d, &mut rng)).collect();
        let b: Vec<CVec> = (0..users).map(|_| sample_cn_vector(d, &mut rng)).collect();
        let k = C64::new(0.7, -1.3);
        let sum: Vec<CVec> = a.iter().zip(&b).map(|(x, y)| x + y * k).collect();
        let ya = downlink_signal(&channel, &bf, &a).unwrap();
        let yb = downlink_signal(&channel, &bf, &b).unwrap();
        let ys = downlink_signal(&channel, &bf, &sum).unwrap();
        for i in 0..users {
            prop_assert!((&ys[i] - (&ya[i] + &yb[i] * k)).norm() <= 1e-10 * (1.0 + ys[i].norm()));
        }
    }

    #[test]
    fn noise_adds_scaled_by_standard_deviation(seed in any::<u64>(), users in 1usize..4, nr in 1usize..4) {
        let (channel, bf, mut rng) = setup(seed, users, nr, 3, 1);
        let x: Vec<CVec> = (0..users).map(|_| sample_cn_vector(1, &mut rng)).collect();
        let w: Vec<CVec> = (0..users).map(|_| sample_cn_vector(nr, &mut rng)).collect();
        let clean = downlink_signal(&channel, &bf, &x).unwrap();
        let noisy = apply_downlink_with_noise(&channel, &bf, &x, &w).unwrap();
        for i in 0..users {
            let expected = &clean[i] + &w[i] * C64::new(0.1f64.sqrt(), 0.0);
            prop_assert!((&noisy[i] - expected).norm() <= 1e-12);
        }
    }
}

#[test]
fn identity_link_returns_the_symbols() {
    let n = 3;
    let channel = ChannelState::new(vec![CMat::identity(n, n)], vec![0.0], vec![0.0], 0).unwrap();
    let bf = BeamformerSet::new(vec![CMat::identity(n, n)], vec![CMat::identity(n, n)]).unwrap();
    let x = CVec::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, -3.0)]);
    let y = apply_downlink_with_noise(&channel, &bf, &[x.clone()], &[CVec::zeros(n)]).unwrap();
    assert_eq!(y[0], x);
}

#[test]
fn fading_is_constant_within_a_block_and_redrawn_across_blocks() {
    let fading = FadingProcess {
        num_users: 2,
        rx_antennas: 2,
        tx_antennas: 3,
        block_length: 4,
        noise_variance: vec![0.1; 2],
        pathloss: PathLossConfig::default(),
        seed: 5,
    };
    let a = fading.state_at(4).unwrap();
    let b = fading.state_at(7).unwrap();
    let c = fading.state_at(8).unwrap();
    assert_eq!(a.matrices, b.matrices);
    assert_ne!(a.matrices, c.matrices);
    assert_eq!(fading.state_at(8).unwrap().matrices, c.matrices);
}

#[test]
fn channel_trace_round_trips_through_csv() {
    let fading = FadingProcess {
        num_users: 2,
        rx_antennas: 1,
        tx_antennas: 2,
        block_length: 1,
        noise_variance: vec![0.2; 2],
        pathloss: PathLossConfig::default(),
        seed: 9,
    };
    let states: Vec<ChannelState> = (1..=3).map(|t| fading.state_at(t).unwrap()).collect();
    let mut buf = Vec::new();
    write_trace_csv(&states, &mut buf).unwrap();
    let back = read_trace_csv(buf.as_slice(), &[0.2; 2]).unwrap();
    assert_eq!(back.len(), states.len());
    for (x, y) in back.iter().zip(&states) {
        assert_eq!(x.matrices, y.matrices);
        assert_eq!(x.slot, y.slot);
    }
}
