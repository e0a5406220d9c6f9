use contact_tebd::analysis::{bootstrap_exponent, bootstrap_z, powerlaw_fit, z_from, ErrorMethod};
use contact_tebd::qjmc::{TrajectoryObservable, TrajectoryRecord};
use proptest::prelude::*;

fn times() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.1).collect()
}

fn record(index: u64, scale: f64) -> TrajectoryRecord {
    let t = times();
    TrajectoryRecord {
        index,
        seed: index,
        chi_max: 8,
        survival_overlap: t.iter().map(|&t| 1.0 - scale * (1.0 + t).powf(-0.2)).collect(),
        total_density: t.iter().map(|&t| scale * (1.0 + t).powf(0.3)).collect(),
        seed_density: t.iter().map(|&t| scale * (1.0 + t).powf(-0.4)).collect(),
        entropy: vec![0.0; t.len()],
        discarded_weight: vec![0.0; t.len()],
        jumps: Vec::new(),
        absorbed_at: None,
        times: t,
    }
}

proptest! {
    #[test]
    fn fits_recover_pure_power_laws(exp in -2.0f64..2.0, amp in 0.01f64..100.0, lo in 1.0f64..4.0, width in 2.0f64..6.0) {
        let t = times();
        let y: Vec<f64> = t.iter().map(|t| amp * t.powf(exp)).collect();
        let f = powerlaw_fit(&t, &y, (lo, lo + width)).unwrap();
        prop_assert!((f.exponent - exp).abs() < 1e-10);
        prop_assert!((f.amplitude / amp - 1.0).abs() < 1e-9);
        prop_assert!(f.n_points >= 5);
    }

    #[test]
    fn fit_is_scale_invariant(exp in -1.0f64..1.0, c in 0.001f64..1000.0) {
        let t = times();
        let y: Vec<f64> = t.iter().map(|t| (1.0 + t).powf(exp) + 0.1 * t.sin().abs()).collect();
        let ys: Vec<f64> = y.iter().map(|v| c * v).collect();
        let a = powerlaw_fit(&t, &y, (5.0, 10.0)).unwrap();
        let b = powerlaw_fit(&t, &ys, (5.0, 10.0)).unwrap();
        prop_assert!((a.exponent - b.exponent).abs() < 1e-10);
        prop_assert!((a.residual_rms - b.residual_rms).abs() < 1e-10);
    }

    #[test]
    fn z_inverts_the_gap(theta in 0.0f64..1.0, z in 0.5f64..3.0) {
        prop_assert!((z_from(theta, theta - 1.0 / z).unwrap() - z).abs() < 1e-12);
    }
}

#[test]
fn identical_trajectories_have_zero_bootstrap_error() {
    let records: Vec<TrajectoryRecord> = (0..10).map(|i| record(i, 1.0)).collect();
    let f = bootstrap_exponent(&records, TrajectoryObservable::TotalDensity, (5.0, 10.0), 50, 1).unwrap();
    assert_eq!(f.method, ErrorMethod::Bootstrap2Sigma);
    assert!(f.error < 1e-12);
    let z = bootstrap_z(&records, (5.0, 10.0), 50, 1).unwrap();
    assert!(z.error < 1e-12);
}

#[test]
fn bootstrap_is_seeded() {
    let records: Vec<TrajectoryRecord> = (0..20).map(|i| record(i, 0.5 + 0.05 * i as f64)).collect();
    let mut noisy = records.clone();
    for (i, r) in noisy.iter_mut().enumerate() {
        for (k, v) in r.total_density.iter_mut().enumerate() {
            *v *= 1.0 + 0.02 * (((i * 31 + k * 7) % 11) as f64 - 5.0) / 5.0;
        }
    }
    let a = bootstrap_exponent(&noisy, TrajectoryObservable::TotalDensity, (5.0, 10.0), 200, 9).unwrap();
    let b = bootstrap_exponent(&noisy, TrajectoryObservable::TotalDensity, (5.0, 10.0), 200, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.error > 0.0);
    let delta = bootstrap_exponent(&noisy, TrajectoryObservable::Survival, (5.0, 10.0), 10, 9).unwrap();
    assert!(delta.exponent < 0.0);
}

#[test]
fn window_outside_data_is_named() {
    let records = vec![record(0, 1.0)];
    let err = bootstrap_exponent(&records, TrajectoryObservable::SeedDensity, (5.0, 20.0), 10, 0).unwrap_err();
    assert!(err.to_string().contains("[5, 20]"), "{err}");
}
