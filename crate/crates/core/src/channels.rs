//! Kraus-form completely positive maps, instruments and one-way LOCC protocols.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::io::{to_json_string, MatrixObject};
use crate::qmat::linalg::{self, CMat};
use crate::qmat::{DensityMatrix, Operator, SpaceShape};

/// Completeness tolerance for `Σ K†K` against the identity.
pub const TOL_KRAUS: f64 = 1e-9;

/// Trace-nonincreasing completely positive map in Kraus form.
#[derive(Debug, Clone, PartialEq)]
pub struct CPMap {
    in_shape: SpaceShape,
    out_shape: SpaceShape,
    kraus: Vec<CMat>,
}

impl CPMap {
    pub fn new(in_shape: SpaceShape, out_shape: SpaceShape, kraus: Vec<CMat>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::InvalidInput("a CP map needs at least one Kraus operator".into()));
        }
        let (din, dout) = (in_shape.total_dim(), out_shape.total_dim());
        for (k, op) in kraus.iter().enumerate() {
            if op.nrows() != dout || op.ncols() != din {
                return Err(Error::Shape(format!(
                    "Kraus operator {k} is {}x{}, expected {dout}x{din}",
                    op.nrows(),
                    op.ncols()
                )));
            }
        }
        let m = Self { in_shape, out_shape, kraus };
        let top = linalg::eigvalsh(&m.kraus_sum()).last().copied().unwrap_or(0.0);
        if top > 1.0 + TOL_KRAUS {
            return Err(Error::InvalidInput(format!(
                "Kraus sum has eigenvalue {top} > 1 (trace increasing)"
            )));
        }
        Ok(m)
    }

    /// Trace-preserving map; rejects incomplete Kraus sets.
    pub fn channel(in_shape: SpaceShape, out_shape: SpaceShape, kraus: Vec<CMat>) -> Result<Self> {
        let m = Self::new(in_shape, out_shape, kraus)?;
        let defect = m.completeness_defect();
        if defect > TOL_KRAUS {
            return Err(Error::InvalidInput(format!(
                "channel is not trace preserving (defect {defect:.3e})"
            )));
        }
        Ok(m)
    }

    pub fn identity(shape: SpaceShape) -> Self {
        let n = shape.total_dim();
        Self { in_shape: shape.clone(), out_shape: shape, kraus: vec![CMat::identity(n, n)] }
    }

    pub fn unitary(shape: SpaceShape, u: CMat) -> Result<Self> {
        Self::channel(shape.clone(), shape, vec![u])
    }

    /// Discard the input and prepare `rho`.
    pub fn replacer(in_shape: SpaceShape, rho: &DensityMatrix) -> Result<Self> {
        let din = in_shape.total_dim();
        let (vals, vecs) = linalg::eigh(rho.matrix());
        let mut kraus = Vec::new();
        for (j, &l) in vals.iter().enumerate() {
            if l <= 1e-15 {
                continue;
            }
            let v = vecs.column(j).scale(l.sqrt());
            for k in 0..din {
                let mut op = CMat::zeros(rho.dim(), din);
                op.set_column(k, &v);
                kraus.push(op);
            }
        }
        Self::channel(in_shape, rho.shape().clone(), kraus)
    }

    pub fn in_shape(&self) -> &SpaceShape {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &SpaceShape {
        &self.out_shape
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    /// `Σ_k K_k† K_k`.
    pub fn kraus_sum(&self) -> CMat {
        let n = self.in_shape.total_dim();
        self.kraus.iter().fold(CMat::zeros(n, n), |acc, k| acc + k.adjoint() * k)
    }

    pub fn completeness_defect(&self) -> f64 {
        let n = self.in_shape.total_dim();
        linalg::max_abs(&(self.kraus_sum() - CMat::identity(n, n)))
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.completeness_defect() <= tol
    }

    /// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ M(|i⟩⟨j|)`, input factor first.
    pub fn choi(&self) -> CMat {
        let (din, dout) = (self.in_shape.total_dim(), self.out_shape.total_dim());
        let mut out = CMat::zeros(din * dout, din * dout);
        for k in &self.kraus {
            // vec(K) with input index first
            let v = linalg::CVec::from_fn(din * dout, |idx, _| k[(idx % dout, idx / dout)]);
            out += &v * v.adjoint();
        }
        out
    }

    /// Stinespring isometry `Σ_k K_k ⊗ |k⟩_E`, output ordered (out, E).
    pub fn stinespring(&self) -> CMat {
        let (din, dout, nk) = (self.in_shape.total_dim(), self.out_shape.total_dim(), self.kraus.len());
        let mut w = CMat::zeros(dout * nk, din);
        for (e, k) in self.kraus.iter().enumerate() {
            for o in 0..dout {
                for i in 0..din {
                    w[(o * nk + e, i)] = k[(o, i)];
                }
            }
        }
        w
    }

    /// Sequential composition `next ∘ self`.
    pub fn then(&self, next: &CPMap) -> Result<CPMap> {
        if next.in_shape.dims() != self.out_shape.dims() {
            return Err(Error::Shape(format!(
                "cannot compose {} -> {} with {} -> {}",
                self.in_shape, self.out_shape, next.in_shape, next.out_shape
            )));
        }
        let kraus = next
            .kraus
            .iter()
            .flat_map(|b| self.kraus.iter().map(move |a| b * a))
            .collect();
        CPMap::new(self.in_shape.clone(), next.out_shape.clone(), kraus)
    }
}

/// Locate the contiguous block of factors of `shape` that `sub` names; returns its start.
fn locate_block(shape: &SpaceShape, sub: &SpaceShape) -> Result<usize> {
    if shape.dims() == sub.dims() {
        return Ok(0);
    }
    let first = sub.labels()[0];
    let start = shape
        .position(first)
        .ok_or_else(|| Error::Shape(format!("map acts on {sub}, state has {shape}")))?;
    let fs = shape.factors();
    for (off, f) in sub.factors().iter().enumerate() {
        match fs.get(start + off) {
            Some(g) if g == f => {}
            _ => return Err(Error::Shape(format!("map acts on {sub}, state has {shape}"))),
        }
    }
    Ok(start)
}

/// `I_pre ⊗ K ⊗ I_post` together with the shape after replacing the block.
fn embedded(
    shape: &SpaceShape,
    from: &SpaceShape,
    to: &SpaceShape,
    ops: &[CMat],
) -> Result<(SpaceShape, Vec<CMat>)> {
    let start = locate_block(shape, from)?;
    let fs = shape.factors();
    if start == 0 && from.len() == fs.len() {
        return Ok((to.clone(), ops.to_vec()));
    }
    let pre: usize = fs[..start].iter().map(|f| f.dim).product();
    let post: usize = fs[start + from.len()..].iter().map(|f| f.dim).product();
    let mut factors: Vec<(String, usize)> = fs[..start].iter().map(|f| (f.label.clone(), f.dim)).collect();
    factors.extend(to.factors().iter().map(|f| (f.label.clone(), f.dim)));
    factors.extend(fs[start + from.len()..].iter().map(|f| (f.label.clone(), f.dim)));
    let new_shape = SpaceShape::new(factors)?;
    let (ip, iq) = (linalg::identity(pre), linalg::identity(post));
    let ops = ops.iter().map(|k| linalg::kron(&linalg::kron(&ip, k), &iq)).collect();
    Ok((new_shape, ops))
}

/// `Σ_k (K_k ⊗ I) ρ (K_k ⊗ I)†`, acting on the factors named by the map's input shape.
pub fn apply_cp(m: &CPMap, rho: &DensityMatrix) -> Result<Operator> {
    apply_cp_operator(m, &rho.as_operator())
}

pub fn apply_cp_operator(m: &CPMap, x: &Operator) -> Result<Operator> {
    let (shape, ops) = embedded(x.shape(), &m.in_shape, &m.out_shape, &m.kraus)?;
    let n = shape.total_dim();
    let mut out = CMat::zeros(n, n);
    for k in &ops {
        out += k * x.matrix() * k.adjoint();
    }
    Operator::new(shape, linalg::hermitize(&out))
}

/// Heisenberg picture `Σ_k K_k† E K_k`.
pub fn adjoint_apply(m: &CPMap, e: &Operator) -> Result<Operator> {
    let (shape, ops) = embedded(e.shape(), &m.out_shape, &m.in_shape, &m.kraus)?;
    let ops: Vec<CMat> = ops.into_iter().collect();
    let n = shape.total_dim();
    let mut out = CMat::zeros(n, n);
    for k in &ops {
        out += k.adjoint() * e.matrix() * k;
    }
    Operator::new(shape, linalg::hermitize(&out))
}

/// CP maps with common shapes whose sum is trace preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    branches: Vec<CPMap>,
}

impl Instrument {
    pub fn new(branches: Vec<CPMap>) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| Error::InvalidInput("instrument without branches".into()))?;
        for (i, b) in branches.iter().enumerate() {
            if b.in_shape != first.in_shape || b.out_shape != first.out_shape {
                return Err(Error::Shape(format!("branch {i} shape differs from branch 0")));
            }
        }
        let n = first.in_shape.total_dim();
        let total = branches.iter().fold(CMat::zeros(n, n), |acc, b| acc + b.kraus_sum());
        let defect = linalg::max_abs(&(total - CMat::identity(n, n)));
        if defect > TOL_KRAUS {
            return Err(Error::InvalidInput(format!(
                "instrument is incomplete (defect {defect:.3e})"
            )));
        }
        Ok(Self { branches })
    }

    /// Computational-basis measurement leaving the post-measurement basis state as outcome record.
    pub fn computational(in_shape: SpaceShape, out_label: &str) -> Self {
        let d = in_shape.total_dim();
        let out = SpaceShape::single(out_label, d);
        let branches = (0..d)
            .map(|i| {
                let mut k = CMat::zeros(d, d);
                k[(i, i)] = linalg::ONE;
                CPMap { in_shape: in_shape.clone(), out_shape: out.clone(), kraus: vec![k] }
            })
            .collect();
        Self { branches }
    }

    pub fn branches(&self) -> &[CPMap] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn in_shape(&self) -> &SpaceShape {
        &self.branches[0].in_shape
    }

    pub fn out_shape(&self) -> &SpaceShape {
        &self.branches[0].out_shape
    }
}

/// `κ = Σ_i κ_{A,i} ⊗ κ_{B,i}`: an instrument on A whose outcome selects a channel on B.
#[derive(Debug, Clone, PartialEq)]
pub struct OneWayLOCC {
    a_instrument: Instrument,
    b_maps: Vec<CPMap>,
}

impl OneWayLOCC {
    pub fn new(a_instrument: Instrument, b_maps: Vec<CPMap>) -> Result<Self> {
        if b_maps.len() != a_instrument.len() {
            return Err(Error::Shape(format!(
                "{} instrument branches but {} B-side maps",
                a_instrument.len(),
                b_maps.len()
            )));
        }
        let first = &b_maps[0];
        for (i, b) in b_maps.iter().enumerate() {
            if b.in_shape.dims() != first.in_shape.dims() || b.out_shape.dims() != first.out_shape.dims() {
                return Err(Error::Shape(format!("B-side map {i} shape differs from map 0")));
            }
            if !b.is_trace_preserving(TOL_KRAUS) {
                return Err(Error::InvalidInput(format!("B-side map {i} is not trace preserving")));
            }
        }
        let labels_ok = a_instrument
            .out_shape()
            .concat(first.out_shape())
            .and_then(|_| a_instrument.in_shape().concat(first.in_shape()));
        if let Err(e) = labels_ok {
            return Err(Error::Shape(format!("A and B labels collide: {e}")));
        }
        Ok(Self { a_instrument, b_maps })
    }

    /// Single branch, identity on both sides.
    pub fn identity(a: SpaceShape, b: SpaceShape) -> Result<Self> {
        let inst = Instrument::new(vec![CPMap::identity(a)])?;
        Self::new(inst, vec![CPMap::identity(b)])
    }

    /// Product of two channels (one branch, no communication).
    pub fn local(a: CPMap, b: CPMap) -> Result<Self> {
        Self::new(Instrument::new(vec![a])?, vec![b])
    }

    pub fn a_instrument(&self) -> &Instrument {
        &self.a_instrument
    }

    pub fn b_maps(&self) -> &[CPMap] {
        &self.b_maps
    }

    pub fn in_shape(&self) -> SpaceShape {
        self.a_instrument
            .in_shape()
            .concat(self.b_maps[0].in_shape())
            .expect("labels checked on construction")
    }

    pub fn out_shape(&self) -> SpaceShape {
        self.a_instrument
            .out_shape()
            .concat(self.b_maps[0].out_shape())
            .expect("labels checked on construction")
    }

    /// Unnormalized branch outputs `(κ_{A,i} ⊗ κ_{B,i})(ρ)`.
    pub fn branch_outputs(&self, rho: &DensityMatrix) -> Result<Vec<CMat>> {
        let inp = self.in_shape();
        if rho.shape().dims() != inp.dims() {
            return Err(Error::Shape(format!(
                "protocol expects input {inp}, state has {}",
                rho.shape()
            )));
        }
        let outputs = self
            .a_instrument
            .branches()
            .par_iter()
            .zip(self.b_maps.par_iter())
            .map(|(a, b)| {
                let n = a.out_shape.total_dim() * b.out_shape.total_dim();
                let mut acc = CMat::zeros(n, n);
                for ka in &a.kraus {
                    for kb in &b.kraus {
                        let k = linalg::kron(ka, kb);
                        acc += &k * rho.matrix() * k.adjoint();
                    }
                }
                acc
            })
            .collect();
        Ok(outputs)
    }
}

/// `Σ_i (κ_{A,i} ⊗ κ_{B,i})(ρ)`.
pub fn apply_locc(kappa: &OneWayLOCC, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let branches = kappa.branch_outputs(rho)?;
    let shape = kappa.out_shape();
    let n = shape.total_dim();
    let total = branches.into_iter().fold(CMat::zeros(n, n), |acc, b| acc + b);
    DensityMatrix::new(shape, total)
}

/// Number of distinct classical messages.
pub fn cc_size(kappa: &OneWayLOCC) -> usize {
    kappa.a_instrument.len()
}

#[derive(Serialize, Deserialize)]
struct ProtocolFile {
    a_instrument: Vec<Vec<MatrixObject>>,
    b_maps: Vec<Vec<MatrixObject>>,
}

fn map_from_objects(objs: &[MatrixObject], what: &str) -> Result<CPMap> {
    let first = objs
        .first()
        .ok_or_else(|| Error::Parse(format!("{what}: empty Kraus list")))?;
    let (out_shape, in_shape) = (first.shape.clone(), first.input_shape());
    let mut kraus = Vec::with_capacity(objs.len());
    for (k, o) in objs.iter().enumerate() {
        if o.shape != out_shape || o.input_shape() != in_shape {
            return Err(Error::Parse(format!("{what}: Kraus operator {k} has a different shape")));
        }
        kraus.push(o.to_matrix()?);
    }
    CPMap::new(in_shape, out_shape, kraus)
}

fn map_to_objects(m: &CPMap) -> Vec<MatrixObject> {
    let in_shape = (m.in_shape != m.out_shape).then(|| m.in_shape.clone());
    m.kraus
        .iter()
        .map(|k| MatrixObject::new(m.out_shape.clone(), in_shape.clone(), k))
        .collect()
}

pub fn protocol_from_json(text: &str) -> Result<OneWayLOCC> {
    let file: ProtocolFile = serde_json::from_str(text)?;
    let branches = file
        .a_instrument
        .iter()
        .enumerate()
        .map(|(i, objs)| map_from_objects(objs, &format!("a_instrument[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let b_maps = file
        .b_maps
        .iter()
        .enumerate()
        .map(|(i, objs)| map_from_objects(objs, &format!("b_maps[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    OneWayLOCC::new(Instrument::new(branches)?, b_maps)
}

pub fn protocol_to_json(kappa: &OneWayLOCC) -> String {
    let file = ProtocolFile {
        a_instrument: kappa.a_instrument.branches().iter().map(map_to_objects).collect(),
        b_maps: kappa.b_maps.iter().map(map_to_objects).collect(),
    };
    to_json_string(&file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::restart_rng;
    use crate::qmat::{self, PureState};
    use crate::random;

    fn q(label: &str) -> SpaceShape {
        SpaceShape::single(label, 2)
    }

    fn random_locc(rng: &mut rand_chacha::ChaCha8Rng, da: usize, db: usize, branches: usize) -> OneWayLOCC {
        let inst = random::instrument_kraus(da, da, branches, 2, rng)
            .into_iter()
            .map(|ks| CPMap::new(SpaceShape::single("A", da), SpaceShape::single("A", da), ks).unwrap())
            .collect();
        let maps = (0..branches)
            .map(|_| {
                CPMap::channel(SpaceShape::single("B", db), SpaceShape::single("B", db), random::channel_kraus(db, db, 2, rng))
                    .unwrap()
            })
            .collect();
        OneWayLOCC::new(Instrument::new(inst).unwrap(), maps).unwrap()
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let mut rng = restart_rng(41, 0);
        let rho = random::mixed_state(SpaceShape::bipartite("A", 2, "B", 3).unwrap(), &mut rng);
        let out = apply_cp(&CPMap::identity(rho.shape().clone()), &rho).unwrap();
        assert!(linalg::max_abs(&(out.matrix() - rho.matrix())) < 1e-15);
        let id = OneWayLOCC::identity(SpaceShape::single("A", 2), SpaceShape::single("B", 3)).unwrap();
        assert!(linalg::max_abs(&(apply_locc(&id, &rho).unwrap().matrix() - rho.matrix())) < 1e-15);
        assert_eq!(cc_size(&id), 1);
    }

    #[test]
    fn projector_on_plus_state() {
        let plus = PureState::normalized(q("A"), linalg::CVec::from_element(2, linalg::ONE)).unwrap().density();
        let mut p0 = CMat::zeros(2, 2);
        p0[(0, 0)] = linalg::ONE;
        let out = apply_cp(&CPMap::new(q("A"), q("A"), vec![p0]).unwrap(), &plus).unwrap();
        let mut want = CMat::zeros(2, 2);
        want[(0, 0)] = linalg::r(0.5);
        assert!(linalg::max_abs(&(out.matrix() - want)) < 1e-15);
    }

    #[test]
    fn acts_on_named_factor_only() {
        let mut rng = restart_rng(42, 0);
        let rho = random::mixed_state(SpaceShape::new(vec![("A", 2), ("B", 3), ("C", 2)]).unwrap(), &mut rng);
        let u = linalg::haar_unitary(3, &mut rng);
        let m = CPMap::unitary(SpaceShape::single("B", 3), u.clone()).unwrap();
        let out = apply_cp(&m, &rho).unwrap();
        let full = linalg::kron(&linalg::kron(&linalg::identity(2), &u), &linalg::identity(2));
        let want = &full * rho.matrix() * full.adjoint();
        assert!(linalg::max_abs(&(out.matrix() - want)) < 1e-13);
        let bad = CPMap::identity(SpaceShape::single("D", 2));
        assert!(matches!(apply_cp(&bad, &rho), Err(Error::Shape(_))));
    }

    #[test]
    fn matches_kraus_sum() {
        let mut rng = restart_rng(43, 0);
        for _ in 0..10 {
            let kraus = random::channel_kraus(3, 2, 3, &mut rng);
            let m = CPMap::channel(SpaceShape::single("A", 3), SpaceShape::single("B", 2), kraus.clone()).unwrap();
            let rho = random::mixed_state(SpaceShape::single("A", 3), &mut rng);
            let mut want = CMat::zeros(2, 2);
            for k in &kraus {
                want += k * rho.matrix() * k.adjoint();
            }
            assert!(linalg::max_abs(&(apply_cp(&m, &rho).unwrap().matrix() - want)) < 1e-12);
        }
    }

    #[test]
    fn measurement_on_bell_state() {
        let phi = qmat::max_entangled(2).unwrap().density();
        let meas = OneWayLOCC::new(Instrument::computational(q("A"), "A"), vec![CPMap::identity(q("B")); 2]).unwrap();
        let out = apply_locc(&meas, &phi).unwrap();
        let want = CMat::from_diagonal(&linalg::CVec::from_vec(vec![linalg::r(0.5), linalg::ZERO, linalg::ZERO, linalg::r(0.5)]));
        assert!(linalg::max_abs(&(out.matrix() - want)) < 1e-15);
        assert_eq!(cc_size(&meas), 2);
    }

    #[test]
    fn duality_with_adjoint() {
        let mut rng = restart_rng(44, 0);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let kraus = random::channel_kraus(2, 3, 2, &mut rng);
            let m = CPMap::new(SpaceShape::single("A", 2), SpaceShape::single("B", 3), kraus).unwrap();
            let rho = random::mixed_state(SpaceShape::single("A", 2), &mut rng);
            let g = linalg::complex_gaussian(3, 3, &mut rng);
            let e = Operator::new(SpaceShape::single("B", 3), linalg::hermitize(&g)).unwrap();
            let lhs = linalg::trace_product(e.matrix(), apply_cp(&m, &rho).unwrap().matrix());
            let rhs = linalg::trace_product(adjoint_apply(&m, &e).unwrap().matrix(), rho.matrix());
            worst = worst.max((lhs - rhs).norm());
        }
        assert!(worst < 1e-10, "{worst}");
        let u = linalg::haar_unitary(2, &mut rng);
        let e = Operator::new(q("A"), linalg::hermitize(&linalg::complex_gaussian(2, 2, &mut rng))).unwrap();
        let adj = adjoint_apply(&CPMap::unitary(q("A"), u.clone()).unwrap(), &e).unwrap();
        assert!(linalg::max_abs(&(adj.matrix() - u.adjoint() * e.matrix() * &u)) < 1e-14);
    }

    #[test]
    fn random_protocols_preserve_trace_and_are_linear() {
        let mut rng = restart_rng(45, 0);
        for case in 0..100 {
            let branches = 1 + case % 3;
            let k = random_locc(&mut rng, 2, 2, branches);
            assert_eq!(cc_size(&k), branches);
            let shape = SpaceShape::bipartite("A", 2, "B", 2).unwrap();
            let a = random::mixed_state(shape.clone(), &mut rng);
            let b = random::mixed_state(shape, &mut rng);
            let ka = apply_locc(&k, &a).unwrap();
            assert!((linalg::trace(ka.matrix()).re - 1.0).abs() < 1e-9);
            if case % 10 == 0 {
                let mix = DensityMatrix::mixture(&[(0.3, &a), (0.7, &b)]).unwrap();
                let lhs = apply_locc(&k, &mix).unwrap();
                let rhs = ka.matrix().scale(0.3) + apply_locc(&k, &b).unwrap().matrix().scale(0.7);
                assert!(linalg::max_abs(&(lhs.matrix() - rhs)) < 1e-10);
            }
        }
    }

    #[test]
    fn product_protocol_equals_sequential_maps() {
        let mut rng = restart_rng(46, 0);
        let a = CPMap::channel(q("A"), q("A"), random::channel_kraus(2, 2, 2, &mut rng)).unwrap();
        let b = CPMap::channel(q("B"), q("B"), random::channel_kraus(2, 2, 3, &mut rng)).unwrap();
        let rho = random::mixed_state(SpaceShape::bipartite("A", 2, "B", 2).unwrap(), &mut rng);
        let joint = apply_locc(&OneWayLOCC::local(a.clone(), b.clone()).unwrap(), &rho).unwrap();
        let step = apply_cp(&a, &rho).unwrap();
        let step = apply_cp_operator(&b, &step).unwrap();
        assert!(linalg::max_abs(&(joint.matrix() - step.matrix())) < 1e-12);
    }

    #[test]
    fn choi_and_stinespring() {
        let mut rng = restart_rng(47, 0);
        let m = CPMap::channel(q("A"), SpaceShape::single("B", 3), random::channel_kraus(2, 3, 2, &mut rng)).unwrap();
        let choi = m.choi();
        // partial trace over the output of the Choi matrix of a channel is the identity
        let choi_op = Operator::new(SpaceShape::bipartite("I", 2, "O", 3).unwrap(), choi).unwrap();
        let tr_out = choi_op.partial_trace(&["I"]).unwrap();
        assert!(linalg::max_abs(&(tr_out.matrix() - CMat::identity(2, 2))) < 1e-12);
        assert!(linalg::eigvalsh(choi_op.matrix()).iter().all(|&l| l > -1e-12));
        let w = m.stinespring();
        assert!(linalg::max_abs(&(w.adjoint() * &w - CMat::identity(2, 2))) < 1e-12);
        let composed = m.then(&CPMap::identity(SpaceShape::single("B", 3))).unwrap();
        assert!(composed.is_trace_preserving(1e-12));
    }

    #[test]
    fn replacer_discards_input() {
        let mut rng = restart_rng(48, 0);
        let target = random::mixed_state(SpaceShape::single("B", 2), &mut rng);
        let m = CPMap::replacer(SpaceShape::single("B", 3), &target).unwrap();
        let rho = random::mixed_state(SpaceShape::single("B", 3), &mut rng);
        assert!(linalg::max_abs(&(apply_cp(&m, &rho).unwrap().matrix() - target.matrix())) < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let two = CMat::identity(2, 2).scale(2.0);
        assert!(matches!(CPMap::new(q("A"), q("A"), vec![two]), Err(Error::InvalidInput(_))));
        assert!(CPMap::new(q("A"), q("A"), vec![CMat::identity(3, 3)]).is_err());
        let half = CPMap::new(q("A"), q("A"), vec![CMat::identity(2, 2).scale(0.5)]).unwrap();
        assert!(Instrument::new(vec![half.clone()]).is_err());
        assert!(CPMap::channel(q("A"), q("A"), vec![CMat::identity(2, 2).scale(0.5)]).is_err());
        let inst = Instrument::computational(q("A"), "A");
        assert!(matches!(OneWayLOCC::new(inst.clone(), vec![CPMap::identity(q("B"))]), Err(Error::Shape(_))));
        assert!(OneWayLOCC::new(inst, vec![CPMap::identity(q("A")); 2]).is_err());
        let id = OneWayLOCC::identity(q("A"), q("B")).unwrap();
        let wrong = DensityMatrix::maximally_mixed(SpaceShape::bipartite("A", 3, "B", 2).unwrap());
        assert!(matches!(apply_locc(&id, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn protocol_json_round_trip() {
        let mut rng = restart_rng(49, 0);
        let inst = random::instrument_kraus(2, 3, 2, 1, &mut rng)
            .into_iter()
            .map(|ks| CPMap::new(q("A"), SpaceShape::single("M", 3), ks).unwrap())
            .collect();
        let maps = vec![CPMap::channel(q("B"), q("B"), random::channel_kraus(2, 2, 2, &mut rng)).unwrap(), CPMap::identity(q("B"))];
        let k = OneWayLOCC::new(Instrument::new(inst).unwrap(), maps).unwrap();
        let text = protocol_to_json(&k);
        let back = protocol_from_json(&text).unwrap();
        assert_eq!(back, k);
        assert_eq!(protocol_to_json(&back), text);
        assert!(matches!(protocol_from_json("{\"a_instrument\": []}"), Err(Error::Parse(_))));
    }
}
