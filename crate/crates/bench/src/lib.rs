//! Benchmark fixtures.

use eoplab_core::channels::OneWayLOCC;
use eoplab_core::ensemble::Ensemble;
use eoplab_core::optim::restart_rng;
use eoplab_core::qmat::{DensityMatrix, SpaceShape};
use eoplab_core::random;

pub fn two_qubit_state(seed: u64) -> DensityMatrix {
    random::mixed_state(SpaceShape::bipartite("A", 2, "B", 2).expect("valid shape"), &mut restart_rng(seed, 0))
}

/// Random protocol with `L = l` on an ensemble of `nx` qubit states.
pub fn lemma_instance(seed: u64, l: usize, nx: usize) -> (OneWayLOCC, Ensemble) {
    let mut rng = restart_rng(seed, 1);
    let e = random::ensemble(nx, 2, false, &mut rng);
    (random::one_way_locc(l, nx, 2, 2, &mut rng), e)
}
