use contact_tebd::model::ModelSpec;
use contact_tebd::oracle::{dense_qjmc_trajectory, seed_pure};
use contact_tebd::qjmc::{
    run_ensemble, run_trajectories, run_trajectory, trajectory_seed, write_jump_log, EnsembleStats, EnsembleStore,
    QjmcConfig,
};
use contact_tebd::c64;
use proptest::prelude::*;

fn cfg(len: usize, omega: f64, t_max: f64) -> QjmcConfig {
    QjmcConfig { measure_every: 1, svd_cutoff: 0.0, ..QjmcConfig::new(ModelSpec::quantum(len, omega), 64, t_max) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mps_trajectory_follows_the_dense_one(len in 2usize..=6, omega in 0.0f64..8.0, master in any::<u64>(), index in 0u64..1000) {
        let c = cfg(len, omega, 1.0);
        let rec = run_trajectory::<c64>(&c, master, index).unwrap();
        let dense = dense_qjmc_trajectory(&c.spec, &seed_pure(&c.spec).unwrap(), 1.0, c.dt, trajectory_seed(master, index)).unwrap();
        prop_assert_eq!(rec.jumps.len(), dense.jumps.len());
        for (a, b) in rec.jumps.iter().zip(&dense.jumps) {
            prop_assert_eq!(a.site, b.site);
            prop_assert!((a.time - b.time).abs() < 1e-12);
        }
        for (i, t) in rec.times.iter().enumerate() {
            let k = dense.times.iter().position(|x| (x - t).abs() < 1e-9).unwrap();
            let n: f64 = dense.states[k].density_profile().iter().sum();
            prop_assert!((rec.total_density[i] - n).abs() < 1e-9, "t={} {} vs {}", t, rec.total_density[i], n);
        }
    }
}

fn json(records: &[contact_tebd::qjmc::TrajectoryRecord]) -> String {
    serde_json::to_string(records).unwrap()
}

#[test]
fn thread_count_does_not_change_results() {
    let c = QjmcConfig::new(ModelSpec::quantum(6, 6.0), 16, 1.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_trajectories::<c64>(&c, 42, 0, 24).unwrap())
    };
    assert_eq!(json(&run(1)), json(&run(3)));
}

#[test]
fn jump_log_and_csv_are_reproducible() {
    let c = QjmcConfig::new(ModelSpec::quantum(5, 6.0), 16, 1.0);
    let bytes = || {
        let (records, stats) = run_ensemble::<c64>(&c, 20, 7).unwrap();
        let mut log = Vec::new();
        write_jump_log(&records, &mut log).unwrap();
        let mut csv = Vec::new();
        stats.write_csv(&mut csv).unwrap();
        (log, csv)
    };
    assert_eq!(bytes(), bytes());
    let (other, _) = run_ensemble::<c64>(&c, 20, 8).unwrap();
    let (same, _) = run_ensemble::<c64>(&c, 20, 7).unwrap();
    assert_ne!(json(&other), json(&same));
}

#[test]
fn extending_a_store_equals_one_long_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = QjmcConfig::new(ModelSpec::quantum(4, 6.0), 16, 0.5);
    let mut store = EnsembleStore::create(dir.path(), c.clone(), 11).unwrap();
    store.extend::<c64>(3).unwrap();
    let mut reopened = EnsembleStore::open(dir.path()).unwrap();
    reopened.extend::<c64>(2).unwrap();
    let stored = reopened.load().unwrap();
    let (direct, _) = run_ensemble::<c64>(&c, 5, 11).unwrap();
    assert_eq!(json(&stored), json(&direct));
}

#[test]
fn ensemble_statistics_are_consistent() {
    let c = QjmcConfig::new(ModelSpec::quantum(4, 3.0), 16, 1.0);
    let (records, stats) = run_ensemble::<c64>(&c, 50, 3).unwrap();
    assert_eq!(stats.n_traj, 50);
    assert_eq!(EnsembleStats::from_records(&records).unwrap(), stats);
    let i = stats.time_index(1.0).unwrap();
    let mean: f64 = records.iter().map(|r| r.total_density[i]).sum::<f64>() / 50.0;
    assert!((stats.total_density.mean[i] - mean).abs() < 1e-14);
    assert!(stats.survival.mean.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
    assert!((stats.survival.mean[0] - 1.0).abs() < 1e-12);
}
