//! Dense complex linear algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvalues below this (in absolute value) count as numerical zero.
pub const TOL_PSD: f64 = 1e-9;
pub const TOL_HERM: f64 = 1e-8;
pub const TOL_TRACE: f64 = 1e-8;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `(M + M†) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Real part of `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Hermitian eigendecomposition. Input is symmetrized first; eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(hermitize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Rebuild `V f(Λ) V†` from an eigendecomposition.
pub fn spectral_apply(values: &[f64], vectors: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let fj = f(lam);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vectors.adjoint()
}

/// Relative eigenvalue floor in [`psd_sqrt`].
pub const SQRT_FLOOR: f64 = 1e-14;

/// Square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[-TOL_PSD, 0)` are clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    if hermiticity_defect(m) > TOL_HERM {
        return Err(Error::InvalidInput(format!(
            "matrix square root of a non-Hermitian matrix (defect {:.3e})",
            hermiticity_defect(m)
        )));
    }
    let (values, vectors) = eigh(m);
    if let Some(&min) = values.first() {
        if min < -TOL_PSD {
            return Err(Error::InvalidInput(format!(
                "matrix square root of a matrix with eigenvalue {min:.3e}"
            )));
        }
    }
    // eigenvalues at roundoff level are zeros; their square roots would be ~1e-8 noise
    let floor = SQRT_FLOOR * values.last().map_or(0.0, |l| l.abs()).max(1.0);
    Ok(spectral_apply(&values, &vectors, |l| if l <= floor { 0.0 } else { l.sqrt() }))
}

/// Shannon entropy in bits of a spectrum, with `0 log 0 = 0` and clamping of tiny negatives.
pub fn entropy_bits(spectrum: &[f64]) -> f64 {
    spectrum
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Row-major multi-index strides for `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// For a reordering of tensor factors, maps each new flat index to its old flat index.
///
/// New factor `j` is old factor `perm[j]`.
pub fn permutation_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    let old_strides = strides(dims);
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let total: usize = dims.iter().product();
    let mut map = vec![0; total];
    let mut digits = vec![0usize; dims.len()];
    for slot in map.iter_mut() {
        *slot = digits
            .iter()
            .zip(perm)
            .map(|(&d, &p)| d * old_strides[p])
            .sum();
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < new_dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    map
}

pub fn permute_matrix(m: &CMat, dims: &[usize], perm: &[usize]) -> CMat {
    let map = permutation_map(dims, perm);
    let n = map.len();
    CMat::from_fn(n, n, |i, j| m[(map[i], map[j])])
}

pub fn permute_vector(v: &CVec, dims: &[usize], perm: &[usize]) -> CVec {
    let map = permutation_map(dims, perm);
    CVec::from_fn(map.len(), |i, _| v[map[i]])
}

/// Partial trace over the factors whose `keep` flag is false.
pub fn partial_trace_raw(m: &CMat, dims: &[usize], keep: &[bool]) -> CMat {
    let kept: Vec<usize> = (0..dims.len()).filter(|&k| keep[k]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|&k| !keep[k]).collect();
    let perm: Vec<usize> = kept.iter().chain(traced.iter()).copied().collect();
    let dk: usize = kept.iter().map(|&k| dims[k]).product();
    let dt: usize = traced.iter().map(|&k| dims[k]).product();
    let map = permutation_map(dims, &perm);
    let mut out = CMat::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = ZERO;
            for t in 0..dt {
                acc += m[(map[i * dt + t], map[j * dt + t])];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Matrix of standard complex Gaussian entries (`E|z|^2 = 1`).
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        c(a * s, b * s)
    })
}

/// Q factor of a QR decomposition with the phases of `diag(R)` moved into `Q`.
fn phase_fixed_q(m: CMat) -> CMat {
    let cols = m.ncols();
    let qr = m.qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for j in 0..cols.min(rmat.nrows()) {
        let d = rmat[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..q.nrows() {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Haar-random `n x n` unitary.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    phase_fixed_q(complex_gaussian(n, n, rng))
}

/// Haar-random isometry `C^cols -> C^rows` (first `cols` columns of a Haar unitary).
pub fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    assert!(cols <= rows, "isometry needs cols <= rows");
    phase_fixed_q(complex_gaussian(rows, cols, rng))
}

/// Closest isometry in Frobenius norm (`U W†` from the SVD).
pub fn polar_isometry(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Sum of singular values.
pub fn nuclear_norm(m: &CMat) -> f64 {
    m.clone().singular_values().iter().sum()
}

/// `exp(t B)` for anti-Hermitian `B`, evaluated through the Hermitian matrix `iB`.
pub struct AntiHermitianExp {
    values: Vec<f64>,
    vectors: CMat,
}

impl AntiHermitianExp {
    pub fn new(b: &CMat) -> Self {
        let h = b.map(|z| z * c(0.0, 1.0));
        let (values, vectors) = eigh(&h);
        Self { values, vectors }
    }

    /// `exp(tB) = exp(-i t H)` with `H = iB`.
    pub fn at(&self, t: f64) -> CMat {
        let n = self.vectors.nrows();
        let mut scaled = self.vectors.clone();
        for (j, &theta) in self.values.iter().enumerate() {
            let ph = Complex64::from_polar(1.0, -t * theta);
            for i in 0..n {
                scaled[(i, j)] *= ph;
            }
        }
        scaled * self.vectors.adjoint()
    }
}
