use super::linalg::{self, CMat, CVec, ONE, TOL_HERM, TOL_PSD, TOL_TRACE, ZERO};
use super::shape::SpaceShape;
use crate::error::{Error, Result};

/// Shaped square matrix with no positivity or trace requirement.
///
/// Used for unnormalized channel outputs and Heisenberg-picture observables.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    shape: SpaceShape,
    mat: CMat,
}

impl Operator {
    pub fn new(shape: SpaceShape, mat: CMat) -> Result<Self> {
        let n = shape.total_dim();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Shape(format!(
                "{}x{} matrix for shape {shape} of dimension {n}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { shape, mat })
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.mat).re
    }

    /// Divide by the trace and validate as a state.
    pub fn normalized(&self) -> Result<DensityMatrix> {
        let t = self.trace();
        if t.abs() < 1e-300 {
            return Err(Error::InvalidInput("cannot normalize a zero-trace operator".into()));
        }
        DensityMatrix::new(self.shape.clone(), self.mat.unscale(t))
    }

    pub fn partial_trace(&self, keep: &[&str]) -> Result<Operator> {
        let (shape, mat) = partial_trace_shaped(&self.shape, &self.mat, keep)?;
        Ok(Operator { shape, mat })
    }
}

/// Positive semidefinite, unit-trace matrix on a labelled space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    shape: SpaceShape,
    mat: CMat,
}

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity, then re-Hermitizes.
    pub fn new(shape: SpaceShape, mat: CMat) -> Result<Self> {
        let n = shape.total_dim();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Shape(format!(
                "{}x{} matrix for shape {shape} of dimension {n}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        let defect = linalg::hermiticity_defect(&mat);
        if defect > TOL_HERM {
            return Err(Error::InvalidInput(format!("not Hermitian (defect {defect:.3e})")));
        }
        let mat = linalg::hermitize(&mat);
        let tr = linalg::trace(&mat).re;
        if (tr - 1.0).abs() > TOL_TRACE {
            return Err(Error::InvalidInput(format!("trace is {tr} instead of 1")));
        }
        let min = linalg::eigvalsh(&mat).first().copied().unwrap_or(0.0);
        if min < -TOL_PSD {
            return Err(Error::InvalidInput(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { shape, mat })
    }

    /// Normalizes a PSD matrix by its trace before validating.
    pub fn from_unnormalized(shape: SpaceShape, mat: CMat) -> Result<Self> {
        Operator::new(shape, mat)?.normalized()
    }

    pub(crate) fn from_parts_unchecked(shape: SpaceShape, mat: CMat) -> Self {
        Self { shape, mat: linalg::hermitize(&mat) }
    }

    pub fn pure(psi: &PureState) -> Self {
        let v = psi.amplitudes();
        Self::from_parts_unchecked(psi.shape().clone(), v * v.adjoint())
    }

    pub fn maximally_mixed(shape: SpaceShape) -> Self {
        let n = shape.total_dim();
        Self { shape, mat: CMat::identity(n, n).unscale(n as f64) }
    }

    pub fn diagonal(shape: SpaceShape, probs: &[f64]) -> Result<Self> {
        let n = shape.total_dim();
        if probs.len() != n {
            return Err(Error::Shape(format!("{} diagonal entries for dimension {n}", probs.len())));
        }
        let d = CVec::from_iterator(n, probs.iter().map(|&p| linalg::r(p)));
        Self::new(shape, CMat::from_diagonal(&d))
    }

    /// `|k⟩⟨k|` in the computational basis.
    pub fn basis(shape: SpaceShape, k: usize) -> Result<Self> {
        let mut p = vec![0.0; shape.total_dim()];
        *p.get_mut(k).ok_or_else(|| Error::Shape(format!("basis index {k} out of range")))? = 1.0;
        Self::diagonal(shape, &p)
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.mat)
    }

    /// Number of eigenvalues above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.eigenvalues().iter().filter(|&&l| l > tol).count()
    }

    pub fn as_operator(&self) -> Operator {
        Operator { shape: self.shape.clone(), mat: self.mat.clone() }
    }

    pub fn with_shape(&self, shape: SpaceShape) -> Result<Self> {
        if shape.total_dim() != self.dim() {
            return Err(Error::Shape(format!("cannot reshape {} into {shape}", self.shape)));
        }
        Ok(Self { shape, mat: self.mat.clone() })
    }

    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityMatrix> {
        let (shape, mat) = partial_trace_shaped(&self.shape, &self.mat, keep)?;
        Ok(Self::from_parts_unchecked(shape, mat))
    }

    /// Reorder tensor factors so that they appear in `order` (a permutation of the labels).
    pub fn permute(&self, order: &[&str]) -> Result<DensityMatrix> {
        let perm = self.shape.positions(order)?;
        if perm.len() != self.shape.len() {
            return Err(Error::Shape(format!("permutation {order:?} does not cover {}", self.shape)));
        }
        let shape = SpaceShape::new(
            perm.iter().map(|&p| {
                let f = &self.shape.factors()[p];
                (f.label.clone(), f.dim)
            }).collect(),
        )?;
        let mat = linalg::permute_matrix(&self.mat, &self.shape.dims(), &perm);
        Ok(Self { shape, mat })
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let shape = self.shape.concat(&other.shape)?;
        Ok(Self { shape, mat: linalg::kron(&self.mat, &other.mat) })
    }

    /// Convex combination `Σ w_k ρ_k` on a common shape.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<DensityMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("empty mixture".into()))?;
        let shape = first.1.shape.clone();
        let n = shape.total_dim();
        let mut mat = CMat::zeros(n, n);
        for (w, rho) in parts {
            if rho.dim() != n {
                return Err(Error::Shape(format!("mixture of {} and {}", shape, rho.shape)));
            }
            mat += rho.mat.scale(*w);
        }
        DensityMatrix::new(shape, mat)
    }

    /// Conjugate by a unitary: `U ρ U†`.
    pub fn conjugate(&self, u: &CMat) -> Result<DensityMatrix> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::Shape("unitary dimension mismatch".into()));
        }
        Ok(Self::from_parts_unchecked(self.shape.clone(), u * &self.mat * u.adjoint()))
    }
}

fn partial_trace_shaped(shape: &SpaceShape, mat: &CMat, keep: &[&str]) -> Result<(SpaceShape, CMat)> {
    let positions = shape.positions(keep)?;
    if positions.is_empty() {
        return Err(Error::Shape("partial trace must keep at least one factor".into()));
    }
    let mut flags = vec![false; shape.len()];
    for p in positions {
        flags[p] = true;
    }
    let kept = SpaceShape::new(
        shape
            .factors()
            .iter()
            .zip(&flags)
            .filter(|(_, &k)| k)
            .map(|(f, _)| (f.label.clone(), f.dim))
            .collect(),
    )?;
    Ok((kept, linalg::partial_trace_raw(mat, &shape.dims(), &flags)))
}

/// Unit vector on a labelled space.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    shape: SpaceShape,
    amps: CVec,
}

impl PureState {
    pub fn new(shape: SpaceShape, amps: CVec) -> Result<Self> {
        if amps.len() != shape.total_dim() {
            return Err(Error::Shape(format!(
                "{} amplitudes for shape {shape}",
                amps.len()
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > TOL_TRACE {
            return Err(Error::InvalidInput(format!("state norm is {norm}")));
        }
        Ok(Self { shape, amps })
    }

    pub fn normalized(shape: SpaceShape, amps: CVec) -> Result<Self> {
        let norm = amps.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidInput("zero vector".into()));
        }
        Self::new(shape, amps.unscale(norm))
    }

    pub fn basis(shape: SpaceShape, k: usize) -> Result<Self> {
        let n = shape.total_dim();
        if k >= n {
            return Err(Error::Shape(format!("basis index {k} out of range")));
        }
        let mut v = CVec::from_element(n, ZERO);
        v[k] = ONE;
        Self::new(shape, v)
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::pure(self)
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let shape = self.shape.concat(&other.shape)?;
        Ok(Self { shape, amps: self.amps.kronecker(&other.amps) })
    }

    pub fn permute(&self, order: &[&str]) -> Result<PureState> {
        let perm = self.shape.positions(order)?;
        if perm.len() != self.shape.len() {
            return Err(Error::Shape(format!("permutation {order:?} does not cover {}", self.shape)));
        }
        let shape = SpaceShape::new(
            perm.iter().map(|&p| {
                let f = &self.shape.factors()[p];
                (f.label.clone(), f.dim)
            }).collect(),
        )?;
        Ok(Self { shape, amps: linalg::permute_vector(&self.amps, &self.shape.dims(), &perm) })
    }
}
