use aois_core::engine::episode::SlotRecord;
use aois_core::engine::output::{plots_from_csv, read_csv, write_run};
use aois_core::engine::sweep::{sweep, Axis};
use aois_core::channel::PathLossConfig;
use aois_core::engine::{run_episode, Mode, SystemConfig};

fn small(mode: Mode, slots: u64) -> SystemConfig {
    let rx = if mode == Mode::Sca { 2 } else { 1 };
    SystemConfig {
        num_users: 3,
        tx_antennas: 4,
        rx_antennas: rx,
        symbol_lengths: vec![2, 4],
        feature_dim: 4,
        max_symbols: 4,
        task_dim: 2,
        costs: vec![1.0, 0.5, 0.75],
        cost_cap: 0.25,
        mc_samples: 4,
        bandwidth_hz: 1e4,
        noise_power_dbm: Some(-10.0),
        power_budget_dbm: 10.0,
        pathloss: PathLossConfig::default(),
        slots,
        seed: 3,
        sca_max_iters: 3,
        zf_iterations: 5,
        ao_max_rounds: 2,
        ..Default::default()
    }
}

#[test]
fn never_transmitting_keeps_queues_empty_and_age_growing() {
    let r = run_episode(&small(Mode::Never, 30), Mode::Never).unwrap();
    assert!(r.records.iter().all(|x| x.queue == 0.0 && x.alpha == 0));
    // No update ever lands, so the receiver keeps its initial instant and the age
    // penalty grows with t even though the content mismatch fluctuates.
    assert!(r.records.iter().all(|x| x.last_update == 0));
    let early: f64 = r.records.iter().filter(|x| x.slot <= 5).map(|x| x.aois).sum();
    let late: f64 = r.records.iter().filter(|x| x.slot > 25).map(|x| x.aois).sum();
    assert!(late > early, "early {early}, late {late}");
}

#[test]
fn always_transmitting_grows_queues_at_cost_minus_cap() {
    let cfg = small(Mode::Always, 20);
    let r = run_episode(&cfg, Mode::Always).unwrap();
    for user in 0..3 {
        let q: Vec<f64> = r.records.iter().filter(|x| x.user == user).map(|x| x.queue).collect();
        let slope = cfg.costs[user] - cfg.cost_cap;
        for w in q.windows(2) {
            assert!((w[1] - w[0] - slope).abs() < 1e-12, "user {user}: {q:?}");
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    for mode in [Mode::Sca, Mode::Zf, Mode::Always] {
        let cfg = small(mode, 4);
        let a = run_episode(&cfg, mode).unwrap();
        let b = run_episode(&cfg, mode).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.summary, b.summary);
    }
}

#[test]
fn single_point_sweep_matches_a_direct_run() {
    let cfg = small(Mode::Zf, 5);
    let rows = sweep(&cfg, Mode::Zf, Axis::Omega, &[cfg.dpp_weight], &[cfg.seed]).unwrap();
    let direct = run_episode(&cfg, Mode::Zf).unwrap().summary;
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].avg_aois, direct.avg_aois);
    assert_eq!(rows[0].transmit_fraction, direct.transmit_fraction);
}

#[test]
fn empty_episode_writes_header_only_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_episode(&small(Mode::Zf, 0), Mode::Zf).unwrap();
    write_run(&r, dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("aois.dat")).unwrap(), "# slot total_aois\n");
    assert_eq!(std::fs::read_to_string(dir.path().join("convergence.dat")).unwrap(), "# iteration objective\n");
    assert_eq!(std::fs::read_to_string(dir.path().join("queues.dat")).unwrap(), "# slot q1 q2 q3\n");
}

#[test]
fn plots_rebuilt_from_csv_are_byte_identical() {
    for mode in [Mode::Sca, Mode::Zf] {
        let run = tempfile::tempdir().unwrap();
        let rebuilt = tempfile::tempdir().unwrap();
        write_run(&run_episode(&small(mode, 4), mode).unwrap(), run.path()).unwrap();
        plots_from_csv(run.path(), rebuilt.path()).unwrap();
        for f in ["convergence.dat", "aois.dat", "queues.dat", "convergence.gp", "aois.gp", "queues.gp"] {
            assert_eq!(std::fs::read(run.path().join(f)).unwrap(), std::fs::read(rebuilt.path().join(f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn summary_matches_recomputation_from_the_slot_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Mode::Zf, 12);
    let r = run_episode(&cfg, Mode::Zf).unwrap();
    write_run(&r, dir.path()).unwrap();
    let log: Vec<SlotRecord> = read_csv(&dir.path().join("slots.csv")).unwrap();
    assert_eq!(log, r.records);
    let t = cfg.slots as f64;
    let mut total = 0.0;
    for group in log.chunk_by(|a, b| a.slot == b.slot) {
        total += group.iter().map(|x| x.aois).sum::<f64>();
    }
    assert!((total / t - r.summary.avg_aois).abs() <= 1e-12 * (1.0 + r.summary.avg_aois));
    for user in 0..cfg.num_users {
        let spent: f64 = log.iter().filter(|x| x.user == user && x.alpha == 1).map(|_| cfg.costs[user]).sum();
        assert!((spent / t - r.summary.avg_cost_per_user[user]).abs() <= 1e-12);
    }
}

#[test]
fn transmit_power_never_exceeds_the_budget() {
    for mode in [Mode::Sca, Mode::Zf, Mode::Always] {
        let cfg = small(mode, 6);
        let r = run_episode(&cfg, mode).unwrap();
        let p_max = cfg.power_budget_w();
        assert!(r.summary.max_power_w <= p_max + 1e-8, "{mode}: {}", r.summary.max_power_w);
        for group in r.records.chunk_by(|a, b| a.slot == b.slot) {
            assert!(group.iter().map(|x| x.power_w).sum::<f64>() <= p_max + 1e-8);
        }
        assert_eq!(r.summary.drift_violations, 0);
        assert_eq!(r.summary.telescoping_violations, 0);
    }
}
