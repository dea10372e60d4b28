use eoplab_core::channels::{CPMap, OneWayLOCC};
use eoplab_core::eop::{
    check_weak_monotonicity, continuity_probe, entanglement_of_purification, CommunicatingOperation, Cut, TOL_OPT,
};
use eoplab_core::optim::{restart_rng, OptimizerConfig};
use eoplab_core::oracle::{self, SearchBudget};
use eoplab_core::qmat::{self, DensityMatrix, SpaceShape};
use eoplab_core::random;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(20), failure_persistence: None, ..ProptestConfig::default() }
}

fn two_qubits() -> SpaceShape {
    SpaceShape::bipartite("A", 2, "B", 2).unwrap()
}

fn opt(restarts: usize) -> OptimizerConfig {
    OptimizerConfig::default().with_restarts(restarts).with_seed(3)
}

fn cut() -> Cut {
    Cut::new(&["A"], &["B"])
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn bounded_by_marginal_entropies(seed in any::<u64>(), rank in 1usize..=4) {
        let rho = random::density_matrix(two_qubits(), rank, &mut restart_rng(seed, 0));
        let v = entanglement_of_purification(&rho, &cut(), &opt(4)).unwrap().value;
        let ha = qmat::von_neumann_entropy(&rho.partial_trace(&["A"]).unwrap());
        let hb = qmat::von_neumann_entropy(&rho.partial_trace(&["B"]).unwrap());
        prop_assert!(v >= -1e-12);
        prop_assert!(v <= ha.min(hb) + 1e-6);
    }

    #[test]
    fn optimizer_beats_random_search(seed in any::<u64>()) {
        let rho = random::mixed_state(two_qubits(), &mut restart_rng(seed, 1));
        let res = entanglement_of_purification(&rho, &cut().with_ancilla(2, 2), &opt(4)).unwrap();
        let rs = oracle::eop_random_search(&rho, &cut().with_ancilla(2, 2), &SearchBudget::new(300, seed).unwrap()).unwrap();
        prop_assert!(res.value <= rs + 1e-9);
    }

    #[test]
    fn random_search_trace_is_nested(seed in any::<u64>(), n in 5usize..40) {
        let rho = random::mixed_state(two_qubits(), &mut restart_rng(seed, 2));
        let c = cut().with_ancilla(2, 2);
        let long = oracle::eop_random_search_trace(&rho, &c, &SearchBudget::new(2 * n, seed).unwrap()).unwrap();
        let short = oracle::eop_random_search_trace(&rho, &c, &SearchBudget::new(n, seed).unwrap()).unwrap();
        prop_assert_eq!(&long[..n], &short[..]);
        prop_assert!(long.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn product_states_have_zero_value(seed in any::<u64>()) {
        let mut rng = restart_rng(seed, 3);
        let a = random::mixed_state(SpaceShape::single("A", 2), &mut rng);
        let b = random::mixed_state(SpaceShape::single("B", 2), &mut rng);
        let v = entanglement_of_purification(&a.tensor(&b).unwrap(), &cut(), &opt(32)).unwrap().value;
        prop_assert!(v.abs() < TOL_OPT, "{}", v);
    }
}

#[test]
fn weak_monotonicity_examples() {
    let budget = SearchBudget::new(200, 0).unwrap();
    let mut rng = restart_rng(9, 0);
    let rho = random::mixed_state(two_qubits(), &mut rng);

    let identity = CommunicatingOperation { locc: OneWayLOCC::identity(SpaceShape::single("A", 2), SpaceShape::single("B", 2)).unwrap(), sent: 1 };
    let r = check_weak_monotonicity(&rho, &identity, &cut(), &opt(4), &budget).unwrap();
    assert!(!r.violation, "{r:?}");
    assert!(r.communication_bits.abs() < 1e-15);

    let zero = DensityMatrix::basis(SpaceShape::single("B", 2), 0).unwrap();
    let replace = CPMap::replacer(SpaceShape::single("B", 2), &zero).unwrap();
    let discard = CommunicatingOperation { locc: OneWayLOCC::local(CPMap::identity(SpaceShape::single("A", 2)), replace).unwrap(), sent: 1 };
    let r = check_weak_monotonicity(&rho, &discard, &cut(), &opt(4), &budget).unwrap();
    assert!(!r.violation && r.output_upper.abs() < TOL_OPT, "{r:?}");

    let rho = random::mixed_state(SpaceShape::bipartite("A", 4, "B", 2).unwrap(), &mut rng);
    let send = CommunicatingOperation { locc: OneWayLOCC::identity(SpaceShape::single("A", 4), SpaceShape::single("B", 2)).unwrap(), sent: 2 };
    let small = cut().with_ancilla(4, 4);
    let r = check_weak_monotonicity(&rho, &send, &small, &opt(3), &budget).unwrap();
    assert!(!r.violation, "{r:?}");
    assert!((r.communication_bits - 1.0).abs() < 1e-15);
}

#[test]
fn continuity_probe_along_depolarizing_path() {
    let mut rng = restart_rng(10, 0);
    let rho = random::mixed_state(two_qubits(), &mut rng);
    let mixed = DensityMatrix::maximally_mixed(two_qubits());
    for eps in [1e-3, 1e-2, 1e-1, 0.5] {
        let sigma = DensityMatrix::mixture(&[(1.0 - eps, &rho), (eps, &mixed)]).unwrap();
        let p = continuity_probe(&rho, &sigma, &cut(), &opt(4)).unwrap();
        eprintln!("eps={eps:.0e} dist={:.3e} ratio={:.3}", p.trace_distance, p.ratio);
        assert!(p.within_advisory_bound, "{p:?}");
    }
}

#[test]
fn bell_state_perturbation_sweep() {
    let bell = qmat::max_entangled(2).unwrap().density();
    let mixed = DensityMatrix::maximally_mixed(bell.shape().clone());
    let mut last = f64::INFINITY;
    for k in 0..=4 {
        let w = k as f64 / 4.0;
        let rho = DensityMatrix::mixture(&[(1.0 - w, &bell), (w, &mixed)]).unwrap();
        let v = entanglement_of_purification(&rho, &cut(), &opt(6)).unwrap().value;
        eprintln!("white noise {w:.2}: E_p = {v:.6}");
        assert!(v <= last + TOL_OPT);
        last = v;
    }
    assert!(last.abs() < TOL_OPT);
}
