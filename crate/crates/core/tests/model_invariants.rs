use contact_tebd::linalg::{expm, kron, max_abs_diff, norm_2, unitarity_defect};
use contact_tebd::model::{
    build_double_space_generator_terms, build_effective_hamiltonian_terms, build_hamiltonian_terms,
    build_trotter_schedule_c64, vectors, ModelSpec, Picture,
};
use contact_tebd::oracle::{assemble_bond_terms, dense_lindbladian, paired_index};
use contact_tebd::c64;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn pair(a: &Array1<c64>) -> Array1<c64> {
    let m = kron(&a.clone().insert_axis(ndarray::Axis(1)), &a.clone().insert_axis(ndarray::Axis(1)));
    m.column(0).to_owned()
}

fn spec_strategy(max_len: usize) -> impl Strategy<Value = ModelSpec> {
    (2usize..=max_len, 0.0f64..10.0, 0.1f64..3.0, any::<bool>()).prop_map(|(len, rate, gamma, quantum)| {
        let mut s = if quantum { ModelSpec::quantum(len, rate) } else { ModelSpec::classical(len, rate) };
        s.gamma = gamma;
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bond_terms_sum_to_the_dense_lindbladian(spec in spec_strategy(4)) {
        let from_terms = assemble_bond_terms(&build_double_space_generator_terms(&spec).unwrap(), 4, spec.len);
        let dense = dense_lindbladian(&spec).unwrap();
        prop_assert!(max_abs_diff(&from_terms, &dense) < 1e-12);
    }

    #[test]
    fn generator_preserves_trace_and_absorbing_state(spec in spec_strategy(6)) {
        let one = pair(&vectors::identity());
        let empty = pair(&vectors::empty());
        for g in build_double_space_generator_terms(&spec).unwrap() {
            prop_assert!(one.dot(&g).iter().all(|z| z.norm() < 1e-13));
            prop_assert!(g.dot(&empty).iter().all(|z| z.norm() < 1e-13));
        }
    }

    #[test]
    fn dense_lindbladian_preserves_trace_and_hermiticity(spec in spec_strategy(3), seed in any::<u64>()) {
        let l = dense_lindbladian(&spec).unwrap();
        let dim = 1usize << spec.len;
        let mut r = Array2::<c64>::zeros((dim, dim));
        let mut x = seed | 1;
        for i in 0..dim {
            for j in 0..=i {
                x ^= x << 13; x ^= x >> 7; x ^= x << 17;
                let re = (x % 1000) as f64 / 1000.0;
                let im = if i == j { 0.0 } else { ((x >> 20) % 1000) as f64 / 1000.0 };
                r[[i, j]] = c64::new(re, im);
                r[[j, i]] = c64::new(re, -im);
            }
        }
        let mut v = Array1::<c64>::zeros(dim * dim);
        for i in 0..dim { for j in 0..dim { v[paired_index(i, j, spec.len)] = r[[i, j]]; } }
        let out = l.dot(&v);
        let trace: c64 = (0..dim).map(|i| out[paired_index(i, i, spec.len)]).sum();
        prop_assert!(trace.norm() < 1e-12);
        for i in 0..dim {
            for j in 0..dim {
                let a = out[paired_index(i, j, spec.len)];
                let b = out[paired_index(j, i, spec.len)].conj();
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn schrodinger_gates_preserve_trace(spec in spec_strategy(5), dt in 0.001f64..0.5) {
        let one = pair(&vectors::identity());
        let sched = build_trotter_schedule_c64(&spec, Picture::SchrodingerDouble, dt).unwrap();
        for g in sched.gates() {
            prop_assert!(max_abs_diff(&one.dot(&g.matrix).insert_axis(ndarray::Axis(0)), &one.clone().insert_axis(ndarray::Axis(0))) < 1e-12);
        }
    }

    #[test]
    fn heisenberg_gates_are_step_adjoints(spec in spec_strategy(5), dt in 0.001f64..0.5) {
        let fwd = build_trotter_schedule_c64(&spec, Picture::SchrodingerDouble, dt).unwrap();
        let adj = build_trotter_schedule_c64(&spec, Picture::HeisenbergDouble, dt).unwrap();
        prop_assert_eq!(fwd.layers.len(), adj.layers.len());
        for (a, b) in fwd.gates().zip(adj.gates()) {
            prop_assert_eq!(a.bond, b.bond);
            let ad = a.matrix.t().mapv(|z| z.conj());
            prop_assert!(max_abs_diff(&ad, &b.matrix) < 1e-14);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_and_pure_gates_contract(len in 2usize..8, omega in 0.0f64..10.0, dt in 0.001f64..1.0) {
        let spec = ModelSpec::quantum(len, omega);
        for h in build_hamiltonian_terms(&spec) {
            prop_assert!(max_abs_diff(&h, &h.t().mapv(|z| z.conj())) < 1e-15);
            prop_assert!(unitarity_defect(&expm(&h.mapv(|z| z * c64::new(0.0, -dt))).unwrap()) < 1e-12);
        }
        let sched = build_trotter_schedule_c64(&spec, Picture::PureStateNonhermitian, dt).unwrap();
        for g in sched.gates() {
            prop_assert!(norm_2(&g.matrix).unwrap() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn effective_hamiltonian_loss_is_total_decay(len in 2usize..7, omega in 0.0f64..10.0, gamma in 0.1f64..3.0) {
        let mut spec = ModelSpec::quantum(len, omega);
        spec.gamma = gamma;
        let loss: Vec<Array2<c64>> = build_effective_hamiltonian_terms(&spec)
            .unwrap()
            .iter()
            .zip(&build_hamiltonian_terms(&spec))
            .map(|(a, b)| (a - b).mapv(|z| z * c64::new(0.0, 2.0)))
            .collect();
        let total = assemble_bond_terms(&loss, 2, len);
        for x in 0..1usize << len {
            for y in 0..1usize << len {
                let want = if x == y { gamma * x.count_ones() as f64 } else { 0.0 };
                prop_assert!((total[[x, y]] - c64::new(want, 0.0)).norm() < 1e-13);
            }
        }
    }
}

#[test]
fn classical_model_has_no_pure_state_dynamics() {
    let spec = ModelSpec::classical(4, 3.0);
    assert!(build_hamiltonian_terms(&spec).is_empty());
    assert!(build_effective_hamiltonian_terms(&spec).is_err());
    assert!(build_trotter_schedule_c64(&spec, Picture::PureStateNonhermitian, 0.1).is_err());
}
