//! Random instance generators used by tests, the verification battery and benches.

use rand::Rng;

use crate::channels::{CPMap, Instrument, OneWayLOCC};
use crate::ensemble::Ensemble;
use crate::qmat::linalg::{self, complex_gaussian, CMat};
use crate::qmat::{DensityMatrix, PureState, SpaceShape};

/// Random state of rank `rank` from a Ginibre matrix (`G G† / Tr`).
pub fn density_matrix<R: Rng + ?Sized>(shape: SpaceShape, rank: usize, rng: &mut R) -> DensityMatrix {
    let n = shape.total_dim();
    let g = complex_gaussian(n, rank.clamp(1, n), rng);
    let m = &g * g.adjoint();
    DensityMatrix::from_unnormalized(shape, m).expect("Ginibre state is valid")
}

/// Full-rank random state.
pub fn mixed_state<R: Rng + ?Sized>(shape: SpaceShape, rng: &mut R) -> DensityMatrix {
    let n = shape.total_dim();
    density_matrix(shape, n, rng)
}

pub fn pure_state<R: Rng + ?Sized>(shape: SpaceShape, rng: &mut R) -> PureState {
    let n = shape.total_dim();
    let g = complex_gaussian(n, 1, rng);
    PureState::normalized(shape, g.column(0).into_owned()).expect("nonzero Gaussian vector")
}

/// Probability vector with entries bounded away from zero.
pub fn distribution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Kraus operators `G_k S^{-1/2}` with `S = Σ G_k† G_k`, a random channel `C^in -> C^out`.
pub fn channel_kraus<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, n_kraus: usize, rng: &mut R) -> Vec<CMat> {
    let gs: Vec<CMat> = (0..n_kraus).map(|_| complex_gaussian(out_dim, in_dim, rng)).collect();
    normalize_kraus(gs)
}

/// Random instrument: `branches` groups of `kraus_per_branch` operators, jointly complete.
pub fn instrument_kraus<R: Rng + ?Sized>(
    in_dim: usize,
    out_dim: usize,
    branches: usize,
    kraus_per_branch: usize,
    rng: &mut R,
) -> Vec<Vec<CMat>> {
    let flat = channel_kraus(in_dim, out_dim, branches * kraus_per_branch, rng);
    flat.chunks(kraus_per_branch).map(|c| c.to_vec()).collect()
}

fn normalize_kraus(gs: Vec<CMat>) -> Vec<CMat> {
    let in_dim = gs[0].ncols();
    let mut s = CMat::zeros(in_dim, in_dim);
    for g in &gs {
        s += g.adjoint() * g;
    }
    let (vals, vecs) = linalg::eigh(&s);
    let inv_sqrt = linalg::spectral_apply(&vals, &vecs, |l| 1.0 / l.sqrt());
    gs.into_iter().map(|g| g * &inv_sqrt).collect()
}

/// Random one-way protocol `A: l → nx` (labels `A → X`) with `branches` outcomes and
/// channels `B: l → d`.
pub fn one_way_locc<R: Rng + ?Sized>(l: usize, nx: usize, d: usize, branches: usize, rng: &mut R) -> OneWayLOCC {
    let (a_in, a_out) = (SpaceShape::single("A", l), SpaceShape::single("X", nx));
    let (b_in, b_out) = (SpaceShape::single("B", l), SpaceShape::single("B", d));
    let inst = instrument_kraus(l, nx, branches, 2, rng)
        .into_iter()
        .map(|ks| CPMap::new(a_in.clone(), a_out.clone(), ks).expect("normalized Kraus family"))
        .collect();
    let maps = (0..branches)
        .map(|_| CPMap::channel(b_in.clone(), b_out.clone(), channel_kraus(l, d, 2, rng)).expect("normalized channel"))
        .collect();
    OneWayLOCC::new(Instrument::new(inst).expect("complete instrument"), maps).expect("matching branches")
}

/// `nx` random states on `B: d` with random probabilities; pure members if `pure`, otherwise
/// random ranks of at least two.
pub fn ensemble<R: Rng + ?Sized>(nx: usize, d: usize, pure: bool, rng: &mut R) -> Ensemble {
    let shape = SpaceShape::single("B", d);
    let states = (0..nx)
        .map(|_| {
            if pure {
                pure_state(shape.clone(), rng).density()
            } else {
                let rank = rng.random_range(2.min(d)..=d);
                density_matrix(shape.clone(), rank, rng)
            }
        })
        .collect();
    Ensemble::new(distribution(nx, rng), states).expect("valid ensemble")
}
