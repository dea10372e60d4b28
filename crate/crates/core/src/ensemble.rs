//! Ensembles `(p_x, W_x)`, their classical-quantum state and `H^ext`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{multistart, Objective, OptimizerConfig, Status};
use crate::qmat::io::{to_json_string, MatrixObject};
use crate::qmat::linalg::{self, CMat, CVec};
use crate::qmat::{DensityMatrix, PureState, SpaceShape};

pub const TOL_PROB: f64 = 1e-10;
/// Largest alphabet or state dimension produced by [`Ensemble::tensor_power`].
pub const MAX_POWER_DIM: usize = 64;
/// Label of the classical register in [`cq_state`].
pub const CLASSICAL_LABEL: &str = "X";

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    /// Index `x` in the original alphabet.
    pub label: usize,
    pub prob: f64,
    pub state: DensityMatrix,
}

/// A finite ensemble. Members of probability zero are dropped but still count toward
/// the alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    alphabet_size: usize,
    shape: SpaceShape,
    members: Vec<Member>,
}

impl Ensemble {
    pub fn new(probs: Vec<f64>, states: Vec<DensityMatrix>) -> Result<Self> {
        if probs.len() != states.len() {
            return Err(Error::InvalidInput(format!(
                "{} probabilities for {} states",
                probs.len(),
                states.len()
            )));
        }
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty ensemble".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInput(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > TOL_PROB {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}")));
        }
        let shape = states[0].shape().clone();
        if let Some(i) = states.iter().position(|s| s.shape() != &shape) {
            return Err(Error::Shape(format!(
                "state {i} has shape {}, expected {shape}",
                states[i].shape()
            )));
        }
        let alphabet_size = probs.len();
        let members = probs
            .into_iter()
            .zip(states)
            .enumerate()
            .filter(|(_, (p, _))| *p > 0.0)
            .map(|(label, (prob, state))| Member { label, prob, state })
            .collect();
        Ok(Self { alphabet_size, shape, members })
    }

    pub fn from_pairs(pairs: Vec<(f64, DensityMatrix)>) -> Result<Self> {
        let (p, s) = pairs.into_iter().unzip();
        Self::new(p, s)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Members with positive probability, in label order.
    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn state_shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn state_dim(&self) -> usize {
        self.shape.total_dim()
    }

    /// Full probability vector over the alphabet.
    pub fn probs(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.alphabet_size];
        for m in &self.members {
            p[m.label] = m.prob;
        }
        p
    }

    pub fn state(&self, label: usize) -> Option<&DensityMatrix> {
        self.members.iter().find(|m| m.label == label).map(|m| &m.state)
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        self.members.iter().all(|m| m.state.rank(tol) == 1)
    }

    /// `(p_x, W_x)` with the members reordered by `perm` (new label `j` is old label `perm[j]`).
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.alphabet_size).collect::<Vec<_>>() {
            return Err(Error::InvalidInput("relabeling is not a permutation".into()));
        }
        let probs = self.probs();
        let mut p = Vec::with_capacity(perm.len());
        let mut s = Vec::with_capacity(perm.len());
        for &old in perm {
            p.push(probs[old]);
            s.push(self.state(old).cloned().unwrap_or_else(|| DensityMatrix::maximally_mixed(self.shape.clone())));
        }
        Self::new(p, s)
    }

    /// `n`-fold i.i.d. extension: letters are strings in lexicographic order, states on
    /// one merged factor.
    pub fn tensor_power(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("tensor power needs n ≥ 1".into()));
        }
        let big_x = self.alphabet_size.checked_pow(n as u32).filter(|&k| k <= MAX_POWER_DIM);
        let big_d = self.state_dim().checked_pow(n as u32).filter(|&k| k <= MAX_POWER_DIM);
        let (Some(big_x), Some(big_d)) = (big_x, big_d) else {
            return Err(Error::Resource(format!("tensor power {n} exceeds dimension {MAX_POWER_DIM}")));
        };
        let probs = self.probs();
        let label = self.shape.labels()[0].to_string();
        let shape = SpaceShape::single(&label, big_d);
        let mut p = Vec::with_capacity(big_x);
        let mut s = Vec::with_capacity(big_x);
        let filler = DensityMatrix::maximally_mixed(self.shape.clone());
        for word in 0..big_x {
            let mut rest = word;
            let mut letters = vec![0; n];
            for slot in letters.iter_mut().rev() {
                *slot = rest % self.alphabet_size;
                rest /= self.alphabet_size;
            }
            let prob: f64 = letters.iter().map(|&x| probs[x]).product();
            let mut m = CMat::identity(1, 1);
            for &x in &letters {
                m = linalg::kron(&m, self.state(x).unwrap_or(&filler).matrix());
            }
            p.push(prob);
            s.push(DensityMatrix::from_unnormalized(shape.clone(), m)?);
        }
        // products of rounded probabilities may drift from 1 by a few ulps
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        Self::new(p, s)
    }
}

/// `W_p = Σ_x p_x W_x`.
pub fn average_state(e: &Ensemble) -> DensityMatrix {
    let parts: Vec<(f64, &DensityMatrix)> = e.members.iter().map(|m| (m.prob, &m.state)).collect();
    DensityMatrix::mixture(&parts).expect("members share one shape")
}

/// `Σ_x p_x |x⟩⟨x| ⊗ W_x` on `X ⊗ B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CQState {
    alphabet_size: usize,
    rho: DensityMatrix,
}

impl CQState {
    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn into_density(self) -> DensityMatrix {
        self.rho
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Diagonal block `p_x W_x`.
    pub fn block(&self, x: usize) -> CMat {
        let d = self.rho.dim() / self.alphabet_size;
        self.rho.matrix().view((x * d, x * d), (d, d)).into_owned()
    }
}

pub fn cq_state(e: &Ensemble) -> Result<CQState> {
    if e.shape.position(CLASSICAL_LABEL).is_some() {
        return Err(Error::Shape(format!(
            "state factor label {CLASSICAL_LABEL} is reserved for the classical register"
        )));
    }
    let nx = e.alphabet_size;
    let d = e.state_dim();
    let mut m = CMat::zeros(nx * d, nx * d);
    for mem in &e.members {
        let off = mem.label * d;
        m.view_mut((off, off), (d, d)).copy_from(&mem.state.matrix().scale(mem.prob));
    }
    let shape = SpaceShape::single(CLASSICAL_LABEL, nx).concat(&e.shape)?;
    Ok(CQState { alphabet_size: nx, rho: DensityMatrix::from_parts_unchecked(shape, m) })
}

/// `H(Σ_x p_x |w_x⟩⟨w_x|)` over reference isometries `V_x`, with `|w_x⟩ = vec(C_x V_xᵀ)`.
struct ExtensionEntropy {
    probs: Vec<f64>,
    scaled: Vec<CMat>,
    ref_dim: usize,
}

impl ExtensionEntropy {
    fn vectors(&self, point: &[CMat]) -> Vec<CVec> {
        self.scaled
            .iter()
            .zip(point)
            .map(|(c, v)| {
                let w = c * v.transpose();
                CVec::from_fn(w.len(), |i, _| w[(i / self.ref_dim, i % self.ref_dim)])
            })
            .collect()
    }

    fn average(&self, ws: &[CVec]) -> CMat {
        let n = ws[0].len();
        let mut sigma = CMat::zeros(n, n);
        for (p, w) in self.probs.iter().zip(ws) {
            sigma.gerc(linalg::r(*p), w, w, linalg::ONE);
        }
        sigma
    }
}

impl Objective for ExtensionEntropy {
    fn value_and_grad(&self, point: &[CMat]) -> (f64, Vec<CMat>) {
        let ws = self.vectors(point);
        let (mu, e) = linalg::eigh(&self.average(&ws));
        let value = linalg::entropy_bits(&mu);
        let g = linalg::spectral_apply(&mu, &e, |l| l.max(1e-30).log2());
        let grads = ws
            .iter()
            .zip(&self.probs)
            .zip(&self.scaled)
            .map(|((w, p), c)| {
                let gw = -(&g * w).scale(*p);
                let gmat = CMat::from_fn(c.nrows(), self.ref_dim, |b, k| gw[b * self.ref_dim + k]);
                gmat.transpose() * c.conjugate()
            })
            .collect();
        (value, grads)
    }

    fn value(&self, point: &[CMat]) -> f64 {
        linalg::entropy_bits(&linalg::eigvalsh(&self.average(&self.vectors(point))))
    }
}

/// Optimizer outcome; `value` is an upper bound on `H^ext`.
#[derive(Debug, Clone)]
pub struct HextResult {
    pub value: f64,
    pub ref_dim: usize,
    /// Reference isometry of each member with positive probability, in member order.
    pub argmin: Vec<CMat>,
    pub restarts_used: usize,
    pub status: Status,
    purifications: Vec<CVec>,
}

impl HextResult {
    /// `|w_x⟩` on `B ⊗ R` for each member, amplitude index `b·R + k`.
    pub fn purifications(&self) -> &[CVec] {
        &self.purifications
    }

    pub fn argmin_params(&self) -> Vec<f64> {
        self.argmin.iter().flat_map(|v| v.iter().flat_map(|z| [z.re, z.im])).collect()
    }

    /// Purification `Σ_x √p_x |x⟩_X |w_x⟩_{B,B2} |x⟩_{A2}` of `cq_state(e)`, on
    /// `[X, B, A2, B2]` with ancilla `(a2, b2)`. Its `E_p` objective value is `self.value`.
    pub fn cq_purification(&self, e: &Ensemble, a2: usize, b2: usize) -> Result<PureState> {
        let (nx, d, r) = (e.alphabet_size, e.state_dim(), self.ref_dim);
        if a2 < nx || b2 < r {
            return Err(Error::InvalidConfig(format!(
                "ancilla {a2}x{b2} cannot hold alphabet {nx} and reference {r}"
            )));
        }
        let mut amps = CVec::zeros(nx * d * a2 * b2);
        for (m, w) in e.members.iter().zip(&self.purifications) {
            let x = m.label;
            for b in 0..d {
                for k in 0..r {
                    amps[((x * d + b) * a2 + x) * b2 + k] = w[b * r + k] * m.prob.sqrt();
                }
            }
        }
        let dims = [(CLASSICAL_LABEL, nx), ("B", d), ("A2", a2), ("B2", b2)];
        PureState::normalized(SpaceShape::new(dims.to_vec())?, amps)
    }
}

fn support_factor(rho: &DensityMatrix) -> CMat {
    let (vals, vecs) = linalg::eigh(rho.matrix());
    let keep: Vec<usize> = (0..vals.len()).rev().filter(|&k| vals[k] > 1e-12).collect();
    let mut c = CMat::zeros(rho.dim(), keep.len());
    for (j, &k) in keep.iter().enumerate() {
        c.set_column(j, &vecs.column(k).scale(vals[k].sqrt()));
    }
    c
}

/// Multistart estimate of `H^ext`. Restart 0 uses the canonical purifications.
pub fn h_ext(e: &Ensemble, ref_dim: usize, opt: &OptimizerConfig) -> Result<HextResult> {
    let scaled: Vec<CMat> = e.members.iter().map(|m| support_factor(&m.state)).collect();
    let max_rank = scaled.iter().map(|c| c.ncols()).max().unwrap_or(0);
    if ref_dim < max_rank {
        return Err(Error::InvalidConfig(format!(
            "reference dimension {ref_dim} is below the largest rank {max_rank}"
        )));
    }
    if opt.restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be at least 1".into()));
    }
    let obj = ExtensionEntropy { probs: e.members.iter().map(|m| m.prob).collect(), scaled, ref_dim };
    let ranks: Vec<usize> = obj.scaled.iter().map(|c| c.ncols()).collect();
    let ms = multistart(&obj, opt.restarts, opt.seed, &opt.settings(), |j, rng| {
        ranks
            .iter()
            .map(|&r| if j == 0 { CMat::identity(ref_dim, r) } else { linalg::haar_isometry(ref_dim, r, rng) })
            .collect()
    });
    let purifications = obj.vectors(&ms.best.point);
    Ok(HextResult {
        value: ms.best.value.max(0.0),
        ref_dim,
        argmin: ms.best.point,
        restarts_used: ms.restarts_used,
        status: ms.best.status,
        purifications,
    })
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    probs: Vec<f64>,
    states: Vec<MatrixObject>,
}

pub fn ensemble_from_json(text: &str) -> Result<Ensemble> {
    let file: EnsembleFile = serde_json::from_str(text)?;
    let states = file.states.iter().map(MatrixObject::to_density).collect::<Result<Vec<_>>>()?;
    Ensemble::new(file.probs, states)
}

/// Zero-probability members are written back as maximally mixed placeholders.
pub fn ensemble_to_json(e: &Ensemble) -> String {
    let filler = DensityMatrix::maximally_mixed(e.shape.clone());
    let states = (0..e.alphabet_size)
        .map(|x| MatrixObject::from_density(e.state(x).unwrap_or(&filler)))
        .collect();
    to_json_string(&EnsembleFile { probs: e.probs(), states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::restart_rng;
    use crate::qmat::{self, PureState};
    use crate::random;

    fn qubit(k: usize) -> DensityMatrix {
        DensityMatrix::basis(SpaceShape::single("B", 2), k).unwrap()
    }

    fn opt(restarts: usize) -> OptimizerConfig {
        OptimizerConfig::default().with_restarts(restarts).with_seed(3)
    }

    #[test]
    fn average_examples() {
        let mix = average_state(&Ensemble::new(vec![0.5, 0.5], vec![qubit(0), qubit(1)]).unwrap());
        assert!(linalg::max_abs(&(mix.matrix() - CMat::identity(2, 2).scale(0.5))) < 1e-15);
        let skew = average_state(&Ensemble::new(vec![0.75, 0.25], vec![qubit(0), qubit(1)]).unwrap());
        assert_eq!(skew.eigenvalues().iter().map(|x| (x * 100.0).round()).collect::<Vec<_>>(), vec![25.0, 75.0]);
    }

    #[test]
    fn cq_state_blocks_and_marginal() {
        let mut rng = restart_rng(31, 0);
        let shape = SpaceShape::single("B", 3);
        let states: Vec<_> = (0..3).map(|_| random::mixed_state(shape.clone(), &mut rng)).collect();
        let e = Ensemble::new(vec![0.2, 0.3, 0.5], states.clone()).unwrap();
        let cq = cq_state(&e).unwrap();
        let tr_x = cq.density().partial_trace(&["B"]).unwrap();
        assert!(linalg::max_abs(&(tr_x.matrix() - average_state(&e).matrix())) < 1e-15);
        for (x, s) in states.iter().enumerate() {
            let b = cq.block(x);
            assert!((linalg::trace(&b).re - e.probs()[x]).abs() < 1e-15);
            assert!(linalg::max_abs(&(b.unscale(e.probs()[x]) - s.matrix())) < 1e-14);
        }
        let single = cq_state(&Ensemble::new(vec![1.0], vec![states[0].clone()]).unwrap()).unwrap();
        assert!(linalg::max_abs(&(single.density().matrix() - states[0].matrix())) < 1e-15);
    }

    #[test]
    fn orthogonal_cq_entropy_is_classical_plus_conditional() {
        let e = Ensemble::new(vec![0.5, 0.5], vec![qubit(0), qubit(1)]).unwrap();
        let cq = cq_state(&e).unwrap();
        assert!((qmat::von_neumann_entropy(cq.density()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(Ensemble::new(vec![0.5, 0.4], vec![qubit(0), qubit(1)]).is_err());
        assert!(Ensemble::new(vec![0.5], vec![qubit(0), qubit(1)]).is_err());
        assert!(Ensemble::new(vec![1.5, -0.5], vec![qubit(0), qubit(1)]).is_err());
        let other = DensityMatrix::basis(SpaceShape::single("C", 2), 0).unwrap();
        assert!(matches!(Ensemble::new(vec![0.5, 0.5], vec![qubit(0), other]), Err(Error::Shape(_))));
        let e = Ensemble::new(vec![1.0, 0.0], vec![qubit(0), qubit(1)]).unwrap();
        assert_eq!((e.alphabet_size(), e.members().len()), (2, 1));
        let mixed = DensityMatrix::maximally_mixed(SpaceShape::single("B", 2));
        let e = Ensemble::new(vec![1.0], vec![mixed]).unwrap();
        assert!(matches!(h_ext(&e, 1, &opt(1)), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn h_ext_examples() {
        let mut rng = restart_rng(32, 0);
        let one = Ensemble::new(vec![1.0], vec![random::pure_state(SpaceShape::single("B", 2), &mut rng).density()]).unwrap();
        assert!(h_ext(&one, 2, &opt(2)).unwrap().value < 1e-9);
        let orth = Ensemble::new(vec![0.75, 0.25], vec![qubit(0), qubit(1)]).unwrap();
        let v = h_ext(&orth, 1, &opt(2)).unwrap().value;
        assert!((v - 0.8112781244591328).abs() < 1e-9, "{v}");
        let rho = random::mixed_state(SpaceShape::single("B", 2), &mut rng);
        let single = h_ext(&Ensemble::new(vec![1.0], vec![rho.clone()]).unwrap(), 2, &opt(4)).unwrap().value;
        let twice = h_ext(&Ensemble::new(vec![0.5, 0.5], vec![rho.clone(), rho]).unwrap(), 2, &opt(4)).unwrap().value;
        assert!(single < 1e-6 && twice < 1e-6, "{single} {twice}");
    }

    #[test]
    fn h_ext_purifications_reduce_to_members() {
        let mut rng = restart_rng(33, 0);
        let shape = SpaceShape::single("B", 2);
        let states: Vec<_> = (0..2).map(|_| random::mixed_state(shape.clone(), &mut rng)).collect();
        let e = Ensemble::new(vec![0.4, 0.6], states.clone()).unwrap();
        let res = h_ext(&e, 2, &opt(4)).unwrap();
        for (w, s) in res.purifications().iter().zip(&states) {
            let psi = PureState::new(SpaceShape::bipartite("B", 2, "R", 2).unwrap(), w.clone()).unwrap();
            let red = psi.density().partial_trace(&["B"]).unwrap();
            assert!(linalg::max_abs(&(red.matrix() - s.matrix())) < 1e-9);
        }
        let avg = qmat::von_neumann_entropy(&average_state(&e));
        assert!(res.value + 1e-9 >= avg - 1e-9 || res.value >= 0.0);
        assert_eq!(res.argmin_params().len(), 2 * 2 * (2 * 2));
    }

    #[test]
    fn tensor_power_and_json() {
        let e = Ensemble::new(vec![0.25, 0.75], vec![qubit(0), qubit(1)]).unwrap();
        let sq = e.tensor_power(2).unwrap();
        assert_eq!((sq.alphabet_size(), sq.state_dim()), (4, 4));
        assert!((sq.probs()[3] - 0.5625).abs() < 1e-15);
        assert!(matches!(e.tensor_power(7), Err(Error::Resource(_))));
        let back = ensemble_from_json(&ensemble_to_json(&sq)).unwrap();
        assert_eq!(back, sq);
        assert!(matches!(ensemble_from_json("{\"probs\": [1.0]"), Err(Error::Parse(_))));
    }
}
