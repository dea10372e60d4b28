//! Visible codes built from one-way LOCC protocols, and checks of the bounds relating
//! their error and size to `E_p` of the classical-quantum state.

use serde::Serialize;

use crate::channels::{adjoint_apply, apply_cp, apply_locc, cc_size, CPMap, Instrument, OneWayLOCC};
use crate::ensemble::{cq_state, Ensemble};
use crate::eop::{entanglement_of_purification, entanglement_of_purification_from, Cut, EopResult};
use crate::error::{Error, Result};
use crate::optim::{AncillaDims, OptimizerConfig};
use crate::qmat::linalg::{self, CMat, CVec};
use crate::qmat::{self, DensityMatrix, Operator, PureState, SpaceShape};

/// Encoder branches with `q_x p_{i,x}` below this are discarded.
pub const DROP_TOL: f64 = 1e-12;
pub const TOL_CHAIN: f64 = 1e-9;
pub const MESSAGE_LABEL: &str = "M";
pub const MEMORY_LABEL: &str = "Q";
pub const OUTPUT_LABEL: &str = "B";

/// Encoding rule for letters the protocol never produces (`q_x = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// Send message 0 with a maximally mixed memory state.
    #[default]
    MaximallyMixed,
    /// Refuse to build the code.
    Error,
}

/// One encoder branch: message `branch` and memory state `state`, sent with probability `prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBranch {
    pub branch: usize,
    pub prob: f64,
    pub state: DensityMatrix,
}

#[derive(Debug, Clone)]
struct Induced {
    q: Vec<f64>,
    /// `Tr_A[(|e_x⟩⟨e_x| ⊗ I) κ(Φ_L)] / q_x`, `None` when `q_x = 0`.
    states: Vec<Option<DensityMatrix>>,
}

/// Visible code `(K, τ, ν)` with `K = C^cc ⊗ C^L`.
#[derive(Debug, Clone)]
pub struct VisibleCode {
    l: usize,
    cc: usize,
    encoder: Vec<Vec<EncoderBranch>>,
    decoder: Vec<CPMap>,
    fallback_letters: Vec<usize>,
    induced: Option<Induced>,
}

impl VisibleCode {
    /// Send each `W_x` unchanged through an `L = d` memory, decode with the identity.
    pub fn identity(e: &Ensemble) -> Result<Self> {
        let d = e.state_dim();
        let q = SpaceShape::single(MEMORY_LABEL, d);
        let filler = DensityMatrix::maximally_mixed(q.clone());
        let encoder = (0..e.alphabet_size())
            .map(|x| {
                let state = match e.state(x) {
                    Some(s) => s.with_shape(q.clone()),
                    None => Ok(filler.clone()),
                }?;
                Ok(vec![EncoderBranch { branch: 0, prob: 1.0, state }])
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder = vec![CPMap::channel(q, SpaceShape::single(OUTPUT_LABEL, d), vec![CMat::identity(d, d)])?];
        Ok(Self { l: d, cc: 1, encoder, decoder, fallback_letters: Vec::new(), induced: None })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn cc(&self) -> usize {
        self.cc
    }

    /// `|Ψ| = L · cc`.
    pub fn size(&self) -> usize {
        self.l * self.cc
    }

    pub fn alphabet_size(&self) -> usize {
        self.encoder.len()
    }

    pub fn output_dim(&self) -> usize {
        self.decoder[0].out_shape().total_dim()
    }

    pub fn encoder(&self, x: usize) -> &[EncoderBranch] {
        &self.encoder[x]
    }

    /// `κ_{B,i}` acting on the memory.
    pub fn decoder_maps(&self) -> &[CPMap] {
        &self.decoder
    }

    /// Letters encoded by the fallback rule.
    pub fn fallback_letters(&self) -> &[usize] {
        &self.fallback_letters
    }

    /// `q`, for codes built from a protocol.
    pub fn outcome_distribution(&self) -> Option<&[f64]> {
        self.induced.as_ref().map(|i| i.q.as_slice())
    }

    pub fn code_shape(&self) -> SpaceShape {
        SpaceShape::bipartite(MESSAGE_LABEL, self.cc, MEMORY_LABEL, self.l).expect("positive dimensions")
    }

    /// `τ(x) = Σ_i p_{i,x} |i⟩⟨i| ⊗ ρ_{i,x}`.
    pub fn encoded_state(&self, x: usize) -> DensityMatrix {
        let mut m = CMat::zeros(self.size(), self.size());
        for br in &self.encoder[x] {
            let off = br.branch * self.l;
            let mut block = m.view_mut((off, off), (self.l, self.l));
            block += br.state.matrix().scale(br.prob);
        }
        DensityMatrix::from_parts_unchecked(self.code_shape(), m)
    }

    /// `ν = Σ_i ⟨i| · ⊗ κ_{B,i}`, a channel from the code space to the output.
    pub fn decoder_channel(&self) -> CPMap {
        let mut kraus = Vec::new();
        for (i, map) in self.decoder.iter().enumerate() {
            let mut bra = CMat::zeros(1, self.cc);
            bra[(0, i)] = linalg::ONE;
            kraus.extend(map.kraus().iter().map(|k| linalg::kron(&bra, k)));
        }
        CPMap::channel(self.code_shape(), self.decoder[0].out_shape().clone(), kraus)
            .expect("branch maps are trace preserving")
    }

    /// `ν(τ(x)) = Σ_i p_{i,x} κ_{B,i}(ρ_{i,x})`.
    pub fn decode(&self, x: usize) -> DensityMatrix {
        let n = self.output_dim();
        let mut m = CMat::zeros(n, n);
        for br in &self.encoder[x] {
            let out = apply_cp(&self.decoder[br.branch], &br.state).expect("memory shape matches");
            m += out.matrix().scale(br.prob);
        }
        DensityMatrix::from_parts_unchecked(self.decoder[0].out_shape().clone(), linalg::hermitize(&m))
    }

    /// Conditional output state of the protocol for letter `x`, if `q_x > 0`.
    pub fn induced_state(&self, x: usize) -> Option<&DensityMatrix> {
        self.induced.as_ref().and_then(|i| i.states[x].as_ref())
    }

    /// Largest entrywise gap between `ν(τ(x))` and the induced conditional state.
    pub fn reconstruction_error(&self) -> f64 {
        (0..self.alphabet_size())
            .filter_map(|x| self.induced_state(x).map(|s| linalg::max_abs(&(self.decode(x).matrix() - s.matrix()))))
            .fold(0.0, f64::max)
    }
}

struct ProtocolDims {
    l: usize,
    nx: usize,
    d: usize,
}

fn protocol_dims(kappa: &OneWayLOCC, l: usize) -> Result<ProtocolDims> {
    if l == 0 {
        return Err(Error::InvalidConfig("memory dimension L must be positive".into()));
    }
    let a_in = kappa.a_instrument().in_shape().total_dim();
    let b_in = kappa.b_maps()[0].in_shape().total_dim();
    if a_in != l || b_in != l {
        return Err(Error::Shape(format!(
            "protocol acts on {}x{} inputs, maximally entangled state has L = {l}",
            a_in, b_in
        )));
    }
    Ok(ProtocolDims {
        l,
        nx: kappa.a_instrument().out_shape().total_dim(),
        d: kappa.b_maps()[0].out_shape().total_dim(),
    })
}

/// `κ(Φ_L)` on `[X, B]`.
pub fn protocol_output(kappa: &OneWayLOCC, l: usize) -> Result<DensityMatrix> {
    let dims = protocol_dims(kappa, l)?;
    let phi = qmat::max_entangled(l)?.density();
    let out = apply_locc(kappa, &phi)?;
    out.with_shape(SpaceShape::bipartite(crate::ensemble::CLASSICAL_LABEL, dims.nx, OUTPUT_LABEL, dims.d)?)
}

/// `q_x = Tr (|e_x⟩⟨e_x| ⊗ I) κ(Φ_L)`.
pub fn outcome_distribution(kappa: &OneWayLOCC, l: usize) -> Result<Vec<f64>> {
    let dims = protocol_dims(kappa, l)?;
    let out = protocol_output(kappa, l)?;
    Ok((0..dims.nx)
        .map(|x| (0..dims.d).map(|b| out.matrix()[(x * dims.d + b, x * dims.d + b)].re).sum())
        .collect())
}

/// `Tr_A[(κ_{A,i}^*(|e_x⟩⟨e_x|) ⊗ I) Φ_L]` for every `(i, x)`, indexed `[x][i]`.
fn heisenberg_weights(kappa: &OneWayLOCC, dims: &ProtocolDims) -> Result<Vec<Vec<CMat>>> {
    let l = dims.l;
    let phi = qmat::max_entangled(l)?.density();
    let a_out = kappa.a_instrument().out_shape().clone();
    (0..dims.nx)
        .map(|x| {
            let mut ex = CMat::zeros(dims.nx, dims.nx);
            ex[(x, x)] = linalg::ONE;
            let ex = Operator::new(a_out.clone(), ex)?;
            kappa
                .a_instrument()
                .branches()
                .iter()
                .map(|branch| {
                    let e = adjoint_apply(branch, &ex)?;
                    let lifted = linalg::kron(e.matrix(), &linalg::identity(l)) * phi.matrix();
                    Ok(linalg::hermitize(&linalg::partial_trace_raw(&lifted, &[l, l], &[false, true])))
                })
                .collect()
        })
        .collect()
}

/// `q` computed in the Heisenberg picture, `q_x = Σ_i Tr κ_{A,i}^*(|e_x⟩⟨e_x|) ⊗ I (Φ_L)`.
pub fn outcome_distribution_heisenberg(kappa: &OneWayLOCC, l: usize) -> Result<Vec<f64>> {
    let dims = protocol_dims(kappa, l)?;
    Ok(heisenberg_weights(kappa, &dims)?
        .iter()
        .map(|row| row.iter().map(|m| linalg::trace(m).re).sum())
        .collect())
}

/// Build with the default fallback.
pub fn build_visible_code(kappa: &OneWayLOCC, l: usize) -> Result<VisibleCode> {
    build_visible_code_with(kappa, l, Fallback::MaximallyMixed, None)
}

/// Build the code, applying `fallback` to letters with `q_x = 0`.
///
/// With [`Fallback::Error`] such letters are an error, restricted to letters of positive
/// probability in `target` when one is given.
pub fn build_visible_code_with(
    kappa: &OneWayLOCC,
    l: usize,
    fallback: Fallback,
    target: Option<&Ensemble>,
) -> Result<VisibleCode> {
    let dims = protocol_dims(kappa, l)?;
    if let Some(e) = target {
        check_target(&dims, e)?;
    }
    let weights = heisenberg_weights(kappa, &dims)?;
    let output = protocol_output(kappa, l)?;
    let memory = SpaceShape::single(MEMORY_LABEL, l);
    let out_shape = SpaceShape::single(OUTPUT_LABEL, dims.d);
    let decoder = kappa
        .b_maps()
        .iter()
        .map(|m| CPMap::new(memory.clone(), out_shape.clone(), m.kraus().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut encoder = Vec::with_capacity(dims.nx);
    let mut fallback_letters = Vec::new();
    let mut q = Vec::with_capacity(dims.nx);
    let mut states = Vec::with_capacity(dims.nx);
    for (x, row) in weights.iter().enumerate() {
        let w: Vec<f64> = row.iter().map(|m| linalg::trace(m).re).collect();
        let qx: f64 = w.iter().sum();
        q.push(qx.max(0.0));
        let kept: Vec<usize> = (0..w.len()).filter(|&i| w[i] >= DROP_TOL).collect();
        if qx < DROP_TOL || kept.is_empty() {
            let needed = target.is_none_or(|e| e.probs()[x] > 0.0);
            if fallback == Fallback::Error && needed {
                return Err(Error::DegenerateBranch(format!("letter {x} has q_x = {qx:.3e}")));
            }
            fallback_letters.push(x);
            encoder.push(vec![EncoderBranch { branch: 0, prob: 1.0, state: DensityMatrix::maximally_mixed(memory.clone()) }]);
            states.push(None);
            continue;
        }
        let total: f64 = kept.iter().map(|&i| w[i]).sum();
        let branches = kept
            .iter()
            .map(|&i| {
                let state = DensityMatrix::from_unnormalized(memory.clone(), row[i].clone())?;
                Ok(EncoderBranch { branch: i, prob: w[i] / total, state })
            })
            .collect::<Result<Vec<_>>>()?;
        encoder.push(branches);
        let block = output.matrix().view((x * dims.d, x * dims.d), (dims.d, dims.d)).unscale(qx);
        states.push(Some(DensityMatrix::from_parts_unchecked(out_shape.clone(), linalg::hermitize(&block))));
    }
    Ok(VisibleCode {
        l,
        cc: cc_size(kappa),
        encoder,
        decoder,
        fallback_letters,
        induced: Some(Induced { q, states }),
    })
}

fn check_target(dims: &ProtocolDims, e: &Ensemble) -> Result<()> {
    if e.alphabet_size() != dims.nx || e.state_dim() != dims.d {
        return Err(Error::Shape(format!(
            "protocol outputs |X| = {}, d = {}; ensemble has |X| = {}, d = {}",
            dims.nx,
            dims.d,
            e.alphabet_size(),
            e.state_dim()
        )));
    }
    Ok(())
}

/// `ε_p(Ψ) = Σ_x p_x (1 − F²(W_x, ν∘τ(x)))`.
pub fn code_error(code: &VisibleCode, e: &Ensemble) -> Result<f64> {
    if code.alphabet_size() != e.alphabet_size() || code.output_dim() != e.state_dim() {
        return Err(Error::Shape(format!(
            "code has |X| = {}, output {}; ensemble has |X| = {}, d = {}",
            code.alphabet_size(),
            code.output_dim(),
            e.alphabet_size(),
            e.state_dim()
        )));
    }
    let mut err = 0.0;
    for m in e.members() {
        let f = qmat::fidelity(&m.state, &code.decode(m.label))?;
        err += m.prob * (1.0 - f * f);
    }
    Ok(err.clamp(0.0, 1.0))
}

/// `1 − F²(ρ, κ(Φ_L))`.
pub fn state_generation_error(kappa: &OneWayLOCC, l: usize, target: &DensityMatrix) -> Result<f64> {
    let out = protocol_output(kappa, l)?;
    let f = qmat::fidelity(target, &out)?;
    Ok((1.0 - f * f).clamp(0.0, 1.0))
}

/// Slack of every step in the proof of the error bound; each should be `≥ 0`.
/// Identities report `−|residual|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainSlacks {
    /// `Tr √W̃ √κ(Φ) − F²`.
    pub sqrt_overlap_bound: f64,
    /// `Tr √W̃ √κ(Φ) = Σ_x √p_x Tr_B √W_x ⟨e_x| √κ(Φ) |e_x⟩`.
    pub block_identity: f64,
    /// Operator concavity of the square root under the conditional partial trace.
    pub concavity: f64,
    /// Conditional states rewritten as `√q_x` times the decoded states.
    pub conditional_identity: f64,
    /// Split of the sum at weights `√(p_x q_x) − p_x` and `p_x`.
    pub split_identity: f64,
    /// `Σ (√(p q) − p) t_x ≤ Σ (√(p q) − p)_+`.
    pub positive_part: f64,
    /// `Σ (√(p q) − p)_+ ≤ Σ (q − p)_+`.
    pub sqrt_to_linear: f64,
    /// `Σ (q − p)_+ = ½ ‖q − p‖₁`.
    pub half_l1_identity: f64,
    /// `½ ‖q − p‖₁ ≤ ½ ‖W̃ − κ(Φ)‖₁`.
    pub marginal_contraction: f64,
    /// `½ (1 − F_x²) ≤ 1 − F_x`, smallest over letters.
    pub fidelity_square: f64,
    /// `Tr √W_x √σ_x ≤ F_x`, smallest over letters.
    pub fidelity_overlap: f64,
    /// The error bound itself.
    pub lemma: f64,
}

impl ChainSlacks {
    pub fn min(&self) -> f64 {
        [
            self.sqrt_overlap_bound,
            self.block_identity,
            self.concavity,
            self.conditional_identity,
            self.split_identity,
            self.positive_part,
            self.sqrt_to_linear,
            self.half_l1_identity,
            self.marginal_contraction,
            self.fidelity_square,
            self.fidelity_overlap,
            self.lemma,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    /// `½ ε_p(Ψ)`.
    pub lhs: f64,
    /// `1 − F²(W̃_p, κ(Φ_L))`.
    pub fid_term: f64,
    /// `½ ‖W̃_p − κ(Φ_L)‖₁`.
    pub tn_term: f64,
    pub holds: bool,
    pub chain: ChainSlacks,
    pub min_chain_slack: f64,
    pub chain_holds: bool,
    pub reconstruction_error: f64,
    pub l: usize,
    pub cc: usize,
    pub code_size: usize,
    pub q: Vec<f64>,
    pub fallback_letters: Vec<usize>,
}

/// Build the code for `(κ, L)` and evaluate the error bound against `e` step by step.
pub fn verify_lemma(kappa: &OneWayLOCC, l: usize, e: &Ensemble) -> Result<LemmaReport> {
    let code = build_visible_code_with(kappa, l, Fallback::MaximallyMixed, Some(e))?;
    let cq = cq_state(e)?.into_density();
    let out = protocol_output(kappa, l)?;
    let d = e.state_dim();
    let p = e.probs();
    let q = code.outcome_distribution().expect("built from a protocol").to_vec();

    let f = qmat::fidelity(&cq, &out)?;
    let fid_term = 1.0 - f * f;
    let tn_term = 0.5 * qmat::trace_norm_distance(&cq, &out)?;
    let lhs = 0.5 * code_error(&code, e)?;

    let t1 = qmat::sqrt_overlap(cq.matrix(), out.matrix())?;
    let sqrt_out = linalg::psd_sqrt(out.matrix())?;
    let block = |m: &CMat, x: usize| m.view((x * d, x * d), (d, d)).into_owned();
    let mut t1_blocks = 0.0;
    let mut t2 = 0.0;
    let mut t2_direct = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    let mut pos = 0.0;
    let mut fid_sq = f64::INFINITY;
    let mut fid_ov = f64::INFINITY;
    for m in e.members() {
        let x = m.label;
        let (px, qx) = (m.prob, q[x]);
        let sqrt_w = linalg::psd_sqrt(m.state.matrix())?;
        t1_blocks += px.sqrt() * linalg::trace_product(&sqrt_w, &block(&sqrt_out, x)).re;
        let decoded = code.decode(x);
        let tx = qmat::sqrt_overlap(m.state.matrix(), decoded.matrix())?;
        let w = (px * qx).sqrt();
        t2 += w * tx;
        t2_direct += px.sqrt() * qmat::sqrt_overlap(m.state.matrix(), &block(out.matrix(), x))?;
        first += (w - px) * tx;
        second += px * tx;
        pos += (w - px).max(0.0);
        let fx = qmat::fidelity(&m.state, &decoded)?;
        fid_sq = fid_sq.min((1.0 - fx) - 0.5 * (1.0 - fx * fx));
        fid_ov = fid_ov.min(fx - tx);
    }
    let qp_pos: f64 = q.iter().zip(&p).map(|(a, b)| (a - b).max(0.0)).sum();
    let half_l1: f64 = 0.5 * q.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let chain = ChainSlacks {
        sqrt_overlap_bound: t1 - f * f,
        block_identity: -(t1 - t1_blocks).abs(),
        concavity: t2_direct - t1,
        conditional_identity: -(t2 - t2_direct).abs(),
        split_identity: -(t2 - first - second).abs(),
        positive_part: pos - first,
        sqrt_to_linear: qp_pos - pos,
        half_l1_identity: -(qp_pos - half_l1).abs(),
        marginal_contraction: tn_term - half_l1,
        fidelity_square: fid_sq,
        fidelity_overlap: fid_ov,
        lemma: fid_term + tn_term - lhs,
    };
    let min_chain_slack = chain.min();
    Ok(LemmaReport {
        lhs,
        fid_term,
        tn_term,
        holds: lhs <= fid_term + tn_term + TOL_CHAIN,
        chain,
        min_chain_slack,
        chain_holds: min_chain_slack >= -TOL_CHAIN,
        reconstruction_error: code.reconstruction_error(),
        l,
        cc: code.cc(),
        code_size: code.size(),
        q,
        fallback_letters: code.fallback_letters().to_vec(),
    })
}

/// One CSV row of a randomized lemma run.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaRow {
    pub seed: u64,
    pub l: usize,
    pub alphabet: usize,
    pub d: usize,
    pub lhs: f64,
    pub fid_term: f64,
    pub tn_term: f64,
    pub min_chain_slack: f64,
}

impl LemmaRow {
    pub fn new(seed: u64, e: &Ensemble, report: &LemmaReport) -> Self {
        Self {
            seed,
            l: report.l,
            alphabet: e.alphabet_size(),
            d: e.state_dim(),
            lhs: report.lhs,
            fid_term: report.fid_term,
            tn_term: report.tn_term,
            min_chain_slack: report.min_chain_slack,
        }
    }
}

/// `κ` preparing `W̃_p` exactly from any input: the A side announces an eigenvector
/// `(x, j)` of some `p_x W_x` and outputs `|e_x⟩`; the B side prepares that eigenvector.
pub fn exact_preparer(e: &Ensemble, l: usize) -> Result<OneWayLOCC> {
    if l == 0 {
        return Err(Error::InvalidConfig("memory dimension L must be positive".into()));
    }
    let nx = e.alphabet_size();
    let d = e.state_dim();
    let (a_in, a_out) = (SpaceShape::single("A", l), SpaceShape::single(crate::ensemble::CLASSICAL_LABEL, nx));
    let (b_in, b_out) = (SpaceShape::single(OUTPUT_LABEL, l), SpaceShape::single(OUTPUT_LABEL, d));
    let mut branches = Vec::new();
    let mut b_maps = Vec::new();
    for m in e.members() {
        let (vals, vecs) = linalg::eigh(m.state.matrix());
        for (j, &lam) in vals.iter().enumerate() {
            let weight = m.prob * lam;
            if weight <= 1e-15 {
                continue;
            }
            let kraus = (0..l)
                .map(|k| {
                    let mut op = CMat::zeros(nx, l);
                    op[(m.label, k)] = linalg::r(weight.sqrt());
                    op
                })
                .collect();
            branches.push(CPMap::new(a_in.clone(), a_out.clone(), kraus)?);
            let phi = PureState::normalized(b_out.clone(), vecs.column(j).into_owned())?;
            b_maps.push(CPMap::replacer(b_in.clone(), &phi.density())?);
        }
    }
    // dropping tiny eigenvalues leaves the instrument slightly incomplete; rescale
    let total: f64 = branches.iter().map(|b| linalg::trace(&b.kraus_sum()).re).sum::<f64>() / l as f64;
    let s = 1.0 / total.sqrt();
    let branches = branches
        .into_iter()
        .map(|b| CPMap::new(a_in.clone(), a_out.clone(), b.kraus().iter().map(|k| k.scale(s)).collect()))
        .collect::<Result<Vec<_>>>()?;
    OneWayLOCC::new(Instrument::new(branches)?, b_maps)
}

/// `(1 − w) κ₀ + w κ₁`, realized by announcing which protocol ran.
pub fn mix_protocols(k0: &OneWayLOCC, k1: &OneWayLOCC, w: f64) -> Result<OneWayLOCC> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidInput(format!("mixing weight {w} outside [0, 1]")));
    }
    if k0.in_shape().dims() != k1.in_shape().dims() || k0.out_shape().dims() != k1.out_shape().dims() {
        return Err(Error::Shape("protocols have different shapes".into()));
    }
    let a0 = k0.a_instrument();
    let (a_in, a_out) = (a0.in_shape().clone(), a0.out_shape().clone());
    let (b_in, b_out) = (k0.b_maps()[0].in_shape().clone(), k0.b_maps()[0].out_shape().clone());
    let mut branches = Vec::new();
    let mut maps = Vec::new();
    for (k, scale) in [(k0, (1.0 - w).sqrt()), (k1, w.sqrt())] {
        if scale == 0.0 {
            continue;
        }
        for (br, bm) in k.a_instrument().branches().iter().zip(k.b_maps()) {
            branches.push(CPMap::new(a_in.clone(), a_out.clone(), br.kraus().iter().map(|m| m.scale(scale)).collect())?);
            maps.push(CPMap::channel(b_in.clone(), b_out.clone(), bm.kraus().to_vec())?);
        }
    }
    OneWayLOCC::new(Instrument::new(branches)?, maps)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConverseReport {
    /// `log₂ |Ψ|`.
    pub log_size: f64,
    /// `H(Tr_A ρ̃)`.
    pub marginal_entropy: f64,
    /// Upper bound on `E_p(ρ̃)`.
    pub eop_encoded: f64,
    /// Upper bound on `E_p((ι ⊗ ν)(ρ̃))`.
    pub eop_decoded: f64,
    pub size_holds: bool,
    /// `H(Tr_A ρ̃) ≥ E_p(ρ̃)`; upper bounds can only make this look worse, so it is not a failure.
    pub entropy_bound_holds: bool,
    pub monotone_holds: bool,
    pub holds: bool,
    pub ancilla: AncillaDims,
}

/// `ρ̃ = Σ_x p_x |e_x⟩⟨e_x| ⊗ τ(x)` on `[X, (M Q)]`.
pub fn encoded_cq_state(code: &VisibleCode, e: &Ensemble) -> Result<DensityMatrix> {
    if code.alphabet_size() != e.alphabet_size() {
        return Err(Error::Shape(format!(
            "code alphabet {} differs from ensemble alphabet {}",
            code.alphabet_size(),
            e.alphabet_size()
        )));
    }
    let nx = e.alphabet_size();
    let k = code.size();
    let mut m = CMat::zeros(nx * k, nx * k);
    for mem in e.members() {
        let off = mem.label * k;
        let mut block = m.view_mut((off, off), (k, k));
        block += code.encoded_state(mem.label).matrix().scale(mem.prob);
    }
    let shape = SpaceShape::single(crate::ensemble::CLASSICAL_LABEL, nx).concat(&code.code_shape())?;
    DensityMatrix::new(shape, m)
}

/// Push a `[A, K, A2, B2]` purification through a Stinespring isometry `K → B ⊗ E`,
/// giving a `[A, B, A2, (E B2)]` purification.
fn push_forward(psi: &PureState, stinespring: &CMat, d_out: usize, n_env: usize) -> Result<PureState> {
    let dims = psi.shape().dims();
    let (da, dk, a2, b2) = (dims[0], dims[1], dims[2], dims[3]);
    let amps = psi.amplitudes();
    let mut out = CVec::zeros(da * d_out * a2 * n_env * b2);
    for a in 0..da {
        for o in 0..d_out {
            for e in 0..n_env {
                for k in 0..dk {
                    let w = stinespring[(o * n_env + e, k)];
                    if w == linalg::ZERO {
                        continue;
                    }
                    for x in 0..a2 {
                        for y in 0..b2 {
                            let src = ((a * dk + k) * a2 + x) * b2 + y;
                            let dst = ((a * d_out + o) * a2 + x) * (n_env * b2) + e * b2 + y;
                            out[dst] += w * amps[src];
                        }
                    }
                }
            }
        }
    }
    let shape = SpaceShape::new(vec![("A", da), ("B", d_out), ("A2", a2), ("B2", n_env * b2)])?;
    PureState::normalized(shape, out)
}

/// Check `log₂|Ψ| ≥ H(Tr_A ρ̃) ≥ E_p(ρ̃) ≥ E_p((ι ⊗ ν)(ρ̃))` on optimizer estimates.
///
/// The ancilla defaults to `(rank ρ̃, 1)`, which contains the purification realizing
/// `H(Tr_A ρ̃)`. The decoded estimate also starts from the encoded argmin pushed through
/// the decoder's Stinespring isometry.
pub fn converse_chain_check(code: &VisibleCode, e: &Ensemble, opt: &OptimizerConfig) -> Result<ConverseReport> {
    let rho = encoded_cq_state(code, e)?;
    let labels = rho.shape().labels();
    let marginal = rho.partial_trace(&labels[1..])?;
    let log_size = (code.size() as f64).log2();
    let marginal_entropy = qmat::von_neumann_entropy(&marginal);
    let nx = e.alphabet_size();
    let k = code.size();
    let bip = rho.with_shape(SpaceShape::bipartite("A", nx, "B", k)?)?;
    let ancilla = opt.ancilla.unwrap_or(AncillaDims { a2: bip.rank(1e-12).max(1), b2: 1 });
    let cut = Cut::new(&["A"], &["B"]).with_ancilla(ancilla.a2, ancilla.b2);
    let encoded: EopResult = entanglement_of_purification(&bip, &cut, opt)?;

    let nu = code.decoder_channel();
    let n_env = nu.kraus().len();
    let d = code.output_dim();
    let decoded_state = apply_cp(&nu, &rho)?;
    let decoded_state = DensityMatrix::new(SpaceShape::bipartite("A", nx, "B", d)?, decoded_state.into_matrix())?;
    let warm = push_forward(&encoded.purification(), &nu.stinespring(), d, n_env)?;
    let cut2 = Cut::new(&["A"], &["B"]).with_ancilla(ancilla.a2, n_env * ancilla.b2);
    let decoded = entanglement_of_purification_from(&decoded_state, &cut2, opt, &[warm])?;

    let size_holds = log_size >= marginal_entropy - TOL_CHAIN;
    let monotone_holds = decoded.value <= encoded.value + TOL_CHAIN;
    Ok(ConverseReport {
        log_size,
        marginal_entropy,
        eop_encoded: encoded.value,
        eop_decoded: decoded.value,
        size_holds,
        entropy_bound_holds: encoded.value <= marginal_entropy + crate::eop::TOL_OPT,
        monotone_holds,
        holds: size_holds && monotone_holds,
        ancilla,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::restart_rng;
    use crate::random;

    fn qubit(label: &str) -> SpaceShape {
        SpaceShape::single(label, 2)
    }

    /// Measure A in the computational basis, identity on B.
    fn measure(l: usize) -> OneWayLOCC {
        let inst = Instrument::computational(SpaceShape::single("A", l), "X");
        OneWayLOCC::new(inst, vec![CPMap::identity(SpaceShape::single("B", l)); l]).unwrap()
    }

    /// Measurement with a single message: the outcome is recorded on `X` but not sent.
    fn measure_silently(l: usize) -> OneWayLOCC {
        let kraus = (0..l)
            .map(|i| {
                let mut k = CMat::zeros(l, l);
                k[(i, i)] = linalg::ONE;
                k
            })
            .collect();
        let branch = CPMap::new(SpaceShape::single("A", l), SpaceShape::single("X", l), kraus).unwrap();
        OneWayLOCC::new(Instrument::new(vec![branch]).unwrap(), vec![CPMap::identity(SpaceShape::single("B", l))]).unwrap()
    }

    #[test]
    fn outcome_distribution_examples() {
        let q = outcome_distribution(&measure(2), 2).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-15 && (q[1] - 0.5).abs() < 1e-15);
        let mut to_zero = CMat::zeros(3, 2);
        to_zero[(0, 0)] = linalg::ONE;
        let mut to_zero_b = CMat::zeros(3, 2);
        to_zero_b[(0, 1)] = linalg::ONE;
        let a = CPMap::channel(qubit("A"), SpaceShape::single("X", 3), vec![to_zero, to_zero_b]).unwrap();
        let k = OneWayLOCC::local(a, CPMap::identity(qubit("B"))).unwrap();
        let q = outcome_distribution(&k, 2).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-15 && q[1] == 0.0 && q[2] == 0.0);
        let mut rng = restart_rng(51, 0);
        for _ in 0..20 {
            let k = random::one_way_locc(3, 2, 2, 2, &mut rng);
            let s = outcome_distribution(&k, 3).unwrap();
            let h = outcome_distribution_heisenberg(&k, 3).unwrap();
            assert!(s.iter().zip(&h).all(|(a, b)| (a - b).abs() < 1e-10));
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn built_code_reproduces_induced_ensemble() {
        let mut rng = restart_rng(52, 0);
        for branches in 1..4 {
            let k = random::one_way_locc(2, 3, 2, branches, &mut rng);
            let code = build_visible_code(&k, 2).unwrap();
            assert!(code.reconstruction_error() < 1e-10);
            assert_eq!(code.size(), 2 * branches);
            assert_eq!(code.cc(), cc_size(&k));
            for x in 0..3 {
                let total: f64 = code.encoder(x).iter().map(|b| b.prob).sum();
                assert!((total - 1.0).abs() < 1e-9);
                let via_channel = apply_cp(&code.decoder_channel(), &code.encoded_state(x)).unwrap();
                assert!(linalg::max_abs(&(via_channel.matrix() - code.decode(x).matrix())) < 1e-12);
            }
        }
    }

    #[test]
    fn measurement_code_is_error_free_on_induced_ensemble() {
        let k = measure(2);
        let code = build_visible_code(&k, 2).unwrap();
        let induced: Vec<DensityMatrix> = (0..2).map(|x| code.induced_state(x).unwrap().clone()).collect();
        let e = Ensemble::new(outcome_distribution(&k, 2).unwrap(), induced).unwrap();
        assert!(code_error(&code, &e).unwrap() < 1e-12);
        let report = verify_lemma(&k, 2, &e).unwrap();
        assert!(report.holds && report.chain_holds, "{report:?}");
        assert!(report.lhs < 1e-12 && report.fid_term < 1e-9 && report.tn_term < 1e-12);
        assert_eq!(report.code_size, 4);
    }

    #[test]
    fn code_error_examples() {
        let zero = DensityMatrix::basis(qubit("B"), 0).unwrap();
        let one = DensityMatrix::basis(qubit("B"), 1).unwrap();
        let e = Ensemble::new(vec![0.5, 0.5], vec![zero.clone(), one.clone()]).unwrap();
        assert!(code_error(&VisibleCode::identity(&e).unwrap(), &e).unwrap() < 1e-15);
        // the identity code of one ensemble applied to another: F² = |⟨ψ|φ⟩|²
        let plus = PureState::normalized(qubit("B"), CVec::from_element(2, linalg::ONE)).unwrap().density();
        let other = Ensemble::new(vec![0.5, 0.5], vec![plus, zero.clone()]).unwrap();
        let err = code_error(&VisibleCode::identity(&other).unwrap(), &e).unwrap();
        assert!((err - 0.5 * (1.0 - 0.5) - 0.5 * 1.0).abs() < 1e-12, "{err}");
        let mut fixed = VisibleCode::identity(&e).unwrap();
        fixed.decoder = vec![CPMap::replacer(SpaceShape::single(MEMORY_LABEL, 2), &DensityMatrix::basis(qubit("B"), 1).unwrap()).unwrap()];
        let only_zero = Ensemble::new(vec![1.0], vec![zero]).unwrap();
        let mut single = fixed.clone();
        single.encoder.truncate(1);
        assert!((code_error(&single, &only_zero).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_preparer_gives_zero_error() {
        let mut rng = restart_rng(53, 0);
        for l in 1..4 {
            let e = random::ensemble(3, 2, false, &mut rng);
            let k = exact_preparer(&e, l).unwrap();
            let cq = cq_state(&e).unwrap();
            assert!(state_generation_error(&k, l, cq.density()).unwrap() < 1e-9);
            let report = verify_lemma(&k, l, &e).unwrap();
            assert!(report.lhs < 1e-9 && report.holds && report.chain_holds, "{report:?}");
        }
    }

    #[test]
    fn state_generation_error_examples() {
        let k = measure_silently(2);
        let out = protocol_output(&k, 2).unwrap();
        let mut orth = CMat::zeros(4, 4);
        orth[(1, 1)] = linalg::ONE;
        let orth = DensityMatrix::new(out.shape().clone(), orth).unwrap();
        assert!((state_generation_error(&k, 2, &orth).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = restart_rng(54, 0);
        let target = random::mixed_state(out.shape().clone(), &mut rng);
        let f = crate::oracle::fidelity(&target, &out);
        assert!((state_generation_error(&k, 2, &target).unwrap() - (1.0 - f * f)).abs() < 1e-10);
    }

    #[test]
    fn random_lemma_instances_hold() {
        let mut rng = restart_rng(55, 0);
        for case in 0..30 {
            let (l, nx, d) = (2 + case % 3, 2 + case % 2, 2 + (case / 2) % 2);
            let e = random::ensemble(nx, d, case % 4 == 0, &mut rng);
            let noise = random::one_way_locc(l, nx, d, 1 + case % 3, &mut rng);
            let k = mix_protocols(&exact_preparer(&e, l).unwrap(), &noise, (case as f64 / 30.0).powi(2)).unwrap();
            let r = verify_lemma(&k, l, &e).unwrap();
            assert!(r.holds && r.chain_holds, "case {case}: {r:?}");
            assert!(r.reconstruction_error < 1e-10);
        }
    }

    #[test]
    fn fallback_rules() {
        let mut to_zero = CMat::zeros(2, 2);
        to_zero[(0, 0)] = linalg::ONE;
        let mut to_zero_b = CMat::zeros(2, 2);
        to_zero_b[(0, 1)] = linalg::ONE;
        let a = CPMap::channel(qubit("A"), qubit("X"), vec![to_zero, to_zero_b]).unwrap();
        let k = OneWayLOCC::local(a, CPMap::identity(qubit("B"))).unwrap();
        let code = build_visible_code(&k, 2).unwrap();
        assert_eq!(code.fallback_letters(), &[1]);
        assert!(matches!(
            build_visible_code_with(&k, 2, Fallback::Error, None),
            Err(Error::DegenerateBranch(_))
        ));
        let zero = DensityMatrix::basis(qubit("B"), 0).unwrap();
        let e = Ensemble::new(vec![1.0, 0.0], vec![zero.clone(), zero.clone()]).unwrap();
        assert!(build_visible_code_with(&k, 2, Fallback::Error, Some(&e)).is_ok());
        let both = Ensemble::new(vec![0.5, 0.5], vec![zero.clone(), zero]).unwrap();
        let r = verify_lemma(&k, 2, &both).unwrap();
        assert!(r.holds && r.chain_holds, "{r:?}");
        assert!(matches!(verify_lemma(&k, 3, &both), Err(Error::Shape(_))));
    }

    #[test]
    fn converse_chain_examples() {
        let opt = OptimizerConfig::default().with_restarts(2).with_seed(5);
        let mut rng = restart_rng(56, 0);
        let e = random::ensemble(2, 2, true, &mut rng);
        let r = converse_chain_check(&VisibleCode::identity(&e).unwrap(), &e, &opt).unwrap();
        assert!(r.holds, "{r:?}");
        let avg = qmat::von_neumann_entropy(&crate::ensemble::average_state(&e));
        assert!((r.marginal_entropy - avg).abs() < 1e-12);
        let single = Ensemble::new(vec![1.0], vec![random::pure_state(qubit("B"), &mut rng).density()]).unwrap();
        let r = converse_chain_check(&VisibleCode::identity(&single).unwrap(), &single, &opt).unwrap();
        assert!(r.marginal_entropy < 1e-9 && r.eop_encoded < 1e-6 && r.eop_decoded < 1e-6, "{r:?}");
        let k = random::one_way_locc(2, 2, 2, 2, &mut rng);
        let code = build_visible_code(&k, 2).unwrap();
        let e = random::ensemble(2, 2, false, &mut rng);
        let r = converse_chain_check(&code, &e, &opt).unwrap();
        assert!(r.holds && r.entropy_bound_holds, "{r:?}");
    }

    #[test]
    fn mixing_rejects_bad_weight() {
        let k = measure(2);
        assert!(mix_protocols(&k, &k, 1.5).is_err());
        let m = mix_protocols(&k, &measure_silently(2), 0.25).unwrap();
        assert_eq!(cc_size(&m), 3);
    }
}
