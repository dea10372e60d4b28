//! Dense density-matrix kernel: states, partial traces and the fidelity /
//! trace-norm / entropy metrics the rest of the crate is built on.
//!
//! All entropies are in bits.

pub mod io;
pub mod linalg;
mod shape;
mod state;

pub use linalg::{CMat, CVec};
pub use shape::{Factor, SpaceShape};
pub use state::{DensityMatrix, Operator, PureState};

use crate::error::{Error, Result};

fn same_dim(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Shape(format!(
            "dimension mismatch: {} vs {}",
            rho.shape(),
            sigma.shape()
        )));
    }
    Ok(())
}

/// Positive square root of a state.
pub fn matrix_sqrt(rho: &DensityMatrix) -> Result<CMat> {
    linalg::psd_sqrt(rho.matrix())
}

/// `Tr |√ρ √σ|`, the sum of singular values of `√ρ √σ`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    same_dim(rho, sigma)?;
    let prod = matrix_sqrt(rho)? * matrix_sqrt(sigma)?;
    Ok(linalg::nuclear_norm(&prod).min(1.0))
}

/// `Tr √A √B` for positive semidefinite matrices (real up to rounding).
pub fn sqrt_overlap(a: &CMat, b: &CMat) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!("{} vs {}", a.nrows(), b.nrows())));
    }
    let sa = linalg::psd_sqrt(a)?;
    let sb = linalg::psd_sqrt(b)?;
    Ok(linalg::trace_product(&sa, &sb).re)
}

/// `‖ρ − σ‖₁`, the sum of absolute eigenvalues of the difference.
pub fn trace_norm_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    same_dim(rho, sigma)?;
    Ok(trace_norm(&(rho.matrix() - sigma.matrix())))
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm(m: &CMat) -> f64 {
    linalg::eigvalsh(m).iter().map(|l| l.abs()).sum()
}

/// `−Tr ρ log₂ ρ`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    let spectrum: Vec<f64> = rho
        .eigenvalues()
        .into_iter()
        .map(|l| if l.abs() <= linalg::TOL_PSD { 0.0 } else { l })
        .collect();
    linalg::entropy_bits(&spectrum)
}

pub fn partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
    rho.partial_trace(keep)
}

pub fn tensor(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<DensityMatrix> {
    rho.tensor(sigma)
}

/// `|Φ_L⟩ = L^{-1/2} Σ_k |k⟩_A |k⟩_B`.
pub fn max_entangled(l: usize) -> Result<PureState> {
    if l == 0 {
        return Err(Error::Shape("maximally entangled state of size 0".into()));
    }
    let shape = SpaceShape::bipartite("A", l, "B", l)?;
    let mut v = CVec::zeros(l * l);
    let amp = linalg::r(1.0 / (l as f64).sqrt());
    for k in 0..l {
        v[k * l + k] = amp;
    }
    PureState::new(shape, v)
}
