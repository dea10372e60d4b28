//! Randomized verification battery shared by the acceptance target and the `suite` command.
//!
//! Each check returns a [`Check`]; failing checks carry the first failing instance so it
//! can be written out for replay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channels::{protocol_to_json, OneWayLOCC};
use crate::ensemble::{cq_state, ensemble_to_json, h_ext, Ensemble};
use crate::eop::{entanglement_of_purification, entanglement_of_purification_from, regularized_eop, Cut, TOL_OPT};
use crate::error::Result;
use crate::optim::OptimizerConfig;
use crate::oracle::{self, SearchBudget};
use crate::qmat::io::density_to_json;
use crate::qmat::{self, DensityMatrix, SpaceShape};
use crate::random;
use crate::viscode::{self, build_visible_code, converse_chain_check, exact_preparer, mix_protocols, LemmaReport, LemmaRow};

/// A failing instance in the on-disk formats: `(file stem, JSON text)` pairs.
#[derive(Debug, Clone, Default)]
pub struct Counterexample {
    pub files: Vec<(String, String)>,
    pub note: String,
}

impl Counterexample {
    fn state(rho: &DensityMatrix, note: String) -> Self {
        Self { files: vec![("state".into(), density_to_json(rho))], note }
    }

    fn ensemble(e: &Ensemble, note: String) -> Self {
        Self { files: vec![("ensemble".into(), ensemble_to_json(e))], note }
    }

    fn protocol(k: &OneWayLOCC, e: &Ensemble, l: usize, note: String) -> Self {
        Self {
            files: vec![("protocol".into(), protocol_to_json(k)), ("ensemble".into(), ensemble_to_json(e))],
            note: format!("L = {l}; {note}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    /// Worst value of the quantity compared against the tolerance.
    pub worst: f64,
    pub summary: String,
    pub counterexample: Option<Counterexample>,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} {:<28} n={:<4} worst={:+.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.worst,
            self.summary
        )
    }
}

fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(instance_seed(seed, index))
}

/// Seed of instance `index` in a run seeded with `seed`.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

fn two_qubits() -> SpaceShape {
    SpaceShape::bipartite("A", 2, "B", 2).expect("valid shape")
}

/// Random two-qubit state of random rank.
fn random_two_qubit(rng: &mut ChaCha8Rng) -> DensityMatrix {
    let rank = rng.random_range(1..=4);
    random::density_matrix(two_qubits(), rank, rng)
}

/// `E_p(Φ_d) = log₂ d`.
pub fn normalization(dims: &[usize], opt: &OptimizerConfig) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    let mut bad = None;
    for &d in dims {
        let phi = qmat::max_entangled(d)?.density();
        let v = entanglement_of_purification(&phi, &Cut::new(&["A"], &["B"]), opt)?.value;
        let dev = (v - (d as f64).log2()).abs();
        if dev > TOL_OPT && bad.is_none() {
            bad = Some(Counterexample::state(&phi, format!("E_p = {v}, expected log2 {d}")));
        }
        worst = worst.max(dev);
        values.push(format!("d={d}: {v:.6}"));
    }
    Ok(Check {
        name: "maximally-entangled",
        passed: bad.is_none(),
        instances: dims.len(),
        worst,
        summary: values.join(", "),
        counterexample: bad,
    })
}

/// `E_p(ρ) ≤ min(H(ρ_A), H(ρ_B)) + 1e-6` on random two-qubit states.
pub fn entropy_upper_bound(n: usize, seed: u64, opt: &OptimizerConfig) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    let mut bad = None;
    for i in 0..n {
        let rho = random_two_qubit(&mut instance_rng(seed, i));
        let ha = qmat::von_neumann_entropy(&rho.partial_trace(&["A"])?);
        let hb = qmat::von_neumann_entropy(&rho.partial_trace(&["B"])?);
        let v = entanglement_of_purification(&rho, &Cut::new(&["A"], &["B"]), opt)?.value;
        let excess = v - ha.min(hb);
        worst = worst.max(excess);
        if excess > 1e-6 && bad.is_none() {
            bad = Some(Counterexample::state(&rho, format!("E_p = {v}, H_A = {ha}, H_B = {hb}")));
        }
    }
    Ok(Check {
        name: "entropy-upper-bound",
        passed: bad.is_none(),
        instances: n,
        worst,
        summary: "max E_p - min(H_A, H_B)".into(),
        counterexample: bad,
    })
}

/// `E_p(W̃_p) = H(W_p)` for pure-state ensembles, with the oracle finding nothing below.
pub fn pure_ensemble_identity(n: usize, seed: u64, opt: &OptimizerConfig, budget: &SearchBudget) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut oracle_gap = f64::INFINITY;
    let mut bad = None;
    for i in 0..n {
        let mut rng = instance_rng(seed, i);
        let nx = rng.random_range(2..=3);
        let e = random::ensemble(nx, 2, true, &mut rng);
        let cq = cq_state(&e)?.into_density();
        let target = qmat::von_neumann_entropy(&crate::ensemble::average_state(&e));
        let v = entanglement_of_purification(&cq, &Cut::new(&["X"], &["B"]), opt)?.value;
        let small = Cut::new(&["X"], &["B"]).with_ancilla(2, 2);
        let o = oracle::eop_random_search(&cq, &small, budget)?;
        let dev = (v - target).abs();
        worst = worst.max(dev);
        oracle_gap = oracle_gap.min(o - target);
        if (dev > 5e-3 || o < target - 1e-6) && bad.is_none() {
            bad = Some(Counterexample::ensemble(&e, format!("E_p = {v}, oracle = {o}, H(W_p) = {target}")));
        }
    }
    Ok(Check {
        name: "pure-ensemble-identity",
        passed: bad.is_none(),
        instances: n,
        worst,
        summary: format!("|E_p - H(W_p)|; min oracle - H(W_p) = {oracle_gap:+.3e}"),
        counterexample: bad,
    })
}

/// `E_p(W̃_p) ≤ H^ext(W, p)` on mixed ensembles. The `E_p` search also starts from the
/// purification built from the `H^ext` argmin.
pub fn hext_ordering(n: usize, seed: u64, opt: &OptimizerConfig) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    let mut over_slack = 0;
    let mut bad = None;
    for i in 0..n {
        let mut rng = instance_rng(seed, i);
        let nx = rng.random_range(2..=3);
        let e = random::ensemble(nx, 2, false, &mut rng);
        let cq = cq_state(&e)?.into_density();
        let hext = h_ext(&e, e.state_dim(), opt)?;
        let hx = hext.value;
        let cut = Cut::new(&["X"], &["B"]);
        let n = cq.dim();
        let warm = hext.cq_purification(&e, n, n)?;
        let ep = entanglement_of_purification_from(&cq, &cut, opt, &[warm])?.value;
        let excess = ep - hx;
        worst = worst.max(excess);
        if excess > 1e-6 {
            over_slack += 1;
        }
        if excess > TOL_OPT && bad.is_none() {
            bad = Some(Counterexample::ensemble(&e, format!("E_p = {ep}, H^ext = {hx}")));
        }
    }
    Ok(Check {
        name: "hext-ordering",
        passed: bad.is_none(),
        instances: n,
        worst,
        summary: format!("max E_p - H^ext; {over_slack} above 1e-6"),
        counterexample: bad,
    })
}

/// One randomized `(κ, L, ensemble)` instance.
#[derive(Debug, Clone)]
pub struct LemmaInstance {
    pub seed: u64,
    pub l: usize,
    pub kappa: OneWayLOCC,
    pub ensemble: Ensemble,
    /// Weight of the random protocol mixed into the exact preparer.
    pub noise: f64,
}

/// Instances cycle through `L ∈ {2,3,4}`, `|X| ∈ {2,3}`, `d ∈ {2,3}`. Every fourth ensemble
/// is pure; protocols interpolate between an exact preparer of `W̃_p` and a random protocol.
pub fn lemma_instances(n: usize, seed: u64) -> Result<Vec<LemmaInstance>> {
    (0..n)
        .map(|i| {
            let s = instance_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let (l, nx, d) = (2 + i % 3, 2 + (i / 3) % 2, 2 + (i / 6) % 2);
            let e = random::ensemble(nx, d, i % 4 == 0, &mut rng);
            let branches = rng.random_range(1..=3);
            let other = random::one_way_locc(l, nx, d, branches, &mut rng);
            let noise = if i % 5 == 4 { 1.0 } else { rng.random::<f64>().powi(2) };
            let kappa = mix_protocols(&exact_preparer(&e, l)?, &other, noise)?;
            Ok(LemmaInstance { seed: s, l, kappa, ensemble: e, noise })
        })
        .collect()
}

pub fn lemma_reports(instances: &[LemmaInstance]) -> Result<Vec<LemmaReport>> {
    instances.iter().map(|i| viscode::verify_lemma(&i.kappa, i.l, &i.ensemble)).collect()
}

pub fn lemma_rows(instances: &[LemmaInstance], reports: &[LemmaReport]) -> Vec<LemmaRow> {
    instances.iter().zip(reports).map(|(i, r)| LemmaRow::new(i.seed, &i.ensemble, r)).collect()
}

/// The error bound and every step of its proof, slack `≥ −1e-9`.
pub fn lemma_suite(instances: &[LemmaInstance], reports: &[LemmaReport]) -> Check {
    let mut worst = f64::INFINITY;
    let mut bad = None;
    for (inst, r) in instances.iter().zip(reports) {
        worst = worst.min(r.min_chain_slack);
        if !(r.holds && r.chain_holds) && bad.is_none() {
            bad = Some(Counterexample::protocol(&inst.kappa, &inst.ensemble, inst.l, format!("{:?}", r.chain)));
        }
    }
    Check {
        name: "lemma-chain",
        passed: bad.is_none(),
        instances: instances.len(),
        worst,
        summary: "min slack over all steps".into(),
        counterexample: bad,
    }
}

/// Built codes reproduce the induced ensemble and have size `L · CC(κ)`.
pub fn reconstruction(instances: &[LemmaInstance], reports: &[LemmaReport]) -> Check {
    let mut worst = 0.0f64;
    let mut bad = None;
    for (inst, r) in instances.iter().zip(reports) {
        worst = worst.max(r.reconstruction_error);
        let size_ok = r.code_size == inst.l * crate::channels::cc_size(&inst.kappa);
        if (r.reconstruction_error > 1e-10 || !size_ok) && bad.is_none() {
            bad = Some(Counterexample::protocol(
                &inst.kappa,
                &inst.ensemble,
                inst.l,
                format!("reconstruction error {}, size {}", r.reconstruction_error, r.code_size),
            ));
        }
    }
    Check {
        name: "error-free-reconstruction",
        passed: bad.is_none(),
        instances: instances.len(),
        worst,
        summary: "max entry deviation; sizes equal L*CC".into(),
        counterexample: bad,
    }
}

/// `log₂|Ψ| ≥ H(Tr_A ρ̃)` and nonincreasing estimates `E_p(ρ̃) ≥ E_p((ι⊗ν)(ρ̃))`.
pub fn converse_chain(instances: &[LemmaInstance], opt: &OptimizerConfig) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    let mut middle_over = 0;
    let mut bad = None;
    for inst in instances {
        let code = build_visible_code(&inst.kappa, inst.l)?;
        let r = converse_chain_check(&code, &inst.ensemble, opt)?;
        worst = worst.max((r.marginal_entropy - r.log_size).max(r.eop_decoded - r.eop_encoded));
        if !r.entropy_bound_holds {
            middle_over += 1;
        }
        if !r.holds && bad.is_none() {
            bad = Some(Counterexample::protocol(&inst.kappa, &inst.ensemble, inst.l, format!("{r:?}")));
        }
    }
    Ok(Check {
        name: "converse-chain",
        passed: bad.is_none(),
        instances: instances.len(),
        worst,
        summary: format!("max violation of either step; middle step above tol on {middle_over}"),
        counterexample: bad,
    })
}

/// `F² ≤ Tr √ρ √σ` on random pairs of dimension 2 to 4.
pub fn fidelity_overlap(n: usize, seed: u64) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    let mut bad = None;
    for i in 0..n {
        let mut rng = instance_rng(seed, i);
        let d = 2 + i % 3;
        let shape = SpaceShape::single("A", d);
        let rank_a = rng.random_range(1..=d);
        let rank_b = rng.random_range(1..=d);
        let a = random::density_matrix(shape.clone(), rank_a, &mut rng);
        let b = random::density_matrix(shape, rank_b, &mut rng);
        let f = qmat::fidelity(&a, &b)?;
        let t = qmat::sqrt_overlap(a.matrix(), b.matrix())?;
        worst = worst.max(f * f - t);
        if f * f > t + 1e-9 && bad.is_none() {
            bad = Some(Counterexample::state(&a, format!("F^2 = {}, Tr sqrt sqrt = {t}", f * f)));
        }
    }
    Ok(Check {
        name: "fidelity-overlap",
        passed: bad.is_none(),
        instances: n,
        worst,
        summary: "max F^2 - Tr sqrt(rho) sqrt(sigma)".into(),
        counterexample: bad,
    })
}

/// `E_p(ρ^{⊗2})/2 ≤ E_p(ρ) + 1e-3` on random two-qubit states.
pub fn regularization(n: usize, seed: u64, opt: &OptimizerConfig) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    let mut bad = None;
    let cut = Cut::new(&["A"], &["B"]);
    for i in 0..n {
        let rho = random_two_qubit(&mut instance_rng(seed, i));
        let reg = regularized_eop(&rho, 2, &cut, opt)?;
        let excess = reg.per_copy - reg.single.value;
        worst = worst.max(excess);
        if excess > TOL_OPT && bad.is_none() {
            bad = Some(Counterexample::state(&rho, format!("E_p = {}, E_p(2)/2 = {}", reg.single.value, reg.per_copy)));
        }
    }
    Ok(Check {
        name: "two-copy-regularization",
        passed: bad.is_none(),
        instances: n,
        worst,
        summary: "max E_p(rho^2)/2 - E_p(rho)".into(),
        counterexample: bad,
    })
}

/// Channel application matches direct summation, and the optimizer is never worse than
/// random search on the same instance.
pub fn oracle_equivalence(n: usize, seed: u64, opt: &OptimizerConfig, budget: &SearchBudget) -> Result<Check> {
    let mut channel_dev = 0.0f64;
    let mut dominance = f64::NEG_INFINITY;
    let mut bad = None;
    let one = SearchBudget { samples: 1, seed: budget.seed };
    for i in 0..n {
        let mut rng = instance_rng(seed, i);
        let (l, nx, d) = (2 + i % 2, 2 + (i / 2) % 2, 2);
        let k = random::one_way_locc(l, nx, d, 1 + i % 3, &mut rng);
        let input = random::mixed_state(SpaceShape::bipartite("A", l, "B", l)?, &mut rng);
        let dev = oracle::crosscheck_channel(&k, &input, &one)?;
        channel_dev = channel_dev.max(dev);
        let rho = random_two_qubit(&mut rng);
        let cut = Cut::new(&["A"], &["B"]);
        let ep = entanglement_of_purification(&rho, &cut, opt)?;
        let matched = cut.with_ancilla(ep.ancilla.a2, ep.ancilla.b2);
        let rs = oracle::eop_random_search(&rho, &matched, budget)?;
        dominance = dominance.max(ep.value - rs);
        if (dev >= 1e-11 || ep.value > rs + 1e-9) && bad.is_none() {
            bad = Some(Counterexample::state(&rho, format!("channel deviation {dev:.3e}, E_p = {}, random search = {rs}", ep.value)));
        }
    }
    Ok(Check {
        name: "oracle-equivalence",
        passed: bad.is_none(),
        instances: n,
        worst: channel_dev,
        summary: format!("max channel deviation; max E_p - random search = {dominance:+.3e}"),
        counterexample: bad,
    })
}

/// Instance counts and budgets of one battery run.
#[derive(Debug, Clone, Serialize)]
pub struct BatteryConfig {
    pub seed: u64,
    pub normalization_dims: Vec<usize>,
    pub upper_bound_states: usize,
    pub pure_ensembles: usize,
    pub mixed_ensembles: usize,
    pub lemma_instances: usize,
    pub converse_instances: usize,
    pub fidelity_pairs: usize,
    pub regularization_states: usize,
    pub oracle_instances: usize,
    pub oracle_samples: usize,
    pub opt: OptimizerConfig,
    /// Budget for the expensive checks (two copies, ensembles).
    pub heavy_opt: OptimizerConfig,
    /// Budget for both `E_p` estimates of each converse-chain instance.
    pub converse_opt: OptimizerConfig,
}

impl BatteryConfig {
    /// Instance counts of the acceptance criteria.
    pub fn full(seed: u64) -> Self {
        Self {
            seed,
            normalization_dims: vec![2, 3, 4],
            upper_bound_states: 100,
            pure_ensembles: 20,
            mixed_ensembles: 20,
            lemma_instances: 200,
            converse_instances: 200,
            fidelity_pairs: 500,
            regularization_states: 10,
            oracle_instances: 100,
            oracle_samples: 2000,
            opt: OptimizerConfig::default().with_seed(seed),
            heavy_opt: OptimizerConfig::default().with_seed(seed).with_restarts(4),
            converse_opt: OptimizerConfig { max_iter: 100, ..OptimizerConfig::default().with_seed(seed).with_restarts(2) },
        }
    }

    /// A smaller battery that runs in well under a minute.
    pub fn quick(seed: u64) -> Self {
        Self {
            seed,
            normalization_dims: vec![2, 3],
            upper_bound_states: 10,
            pure_ensembles: 3,
            mixed_ensembles: 3,
            lemma_instances: 40,
            converse_instances: 6,
            fidelity_pairs: 100,
            regularization_states: 2,
            oracle_instances: 10,
            oracle_samples: 300,
            opt: OptimizerConfig::default().with_seed(seed).with_restarts(8),
            heavy_opt: OptimizerConfig::default().with_seed(seed).with_restarts(2),
            converse_opt: OptimizerConfig { max_iter: 100, ..OptimizerConfig::default().with_seed(seed).with_restarts(2) },
        }
    }
}

/// Run every check, in a fixed order, calling `report` after each.
pub fn run_battery(cfg: &BatteryConfig, mut report: impl FnMut(&Check)) -> Result<Vec<Check>> {
    let budget = SearchBudget::new(cfg.oracle_samples, cfg.seed)?;
    let mut out = Vec::new();
    let mut push = |c: Check, out: &mut Vec<Check>| {
        report(&c);
        out.push(c);
    };
    push(normalization(&cfg.normalization_dims, &cfg.opt)?, &mut out);
    push(entropy_upper_bound(cfg.upper_bound_states, cfg.seed, &cfg.opt)?, &mut out);
    push(pure_ensemble_identity(cfg.pure_ensembles, cfg.seed, &cfg.heavy_opt, &budget)?, &mut out);
    push(hext_ordering(cfg.mixed_ensembles, cfg.seed, &cfg.heavy_opt)?, &mut out);
    let instances = lemma_instances(cfg.lemma_instances, cfg.seed)?;
    let reports = lemma_reports(&instances)?;
    push(lemma_suite(&instances, &reports), &mut out);
    push(reconstruction(&instances, &reports), &mut out);
    let converse = &instances[..cfg.converse_instances.min(instances.len())];
    push(converse_chain(converse, &cfg.converse_opt)?, &mut out);
    push(fidelity_overlap(cfg.fidelity_pairs, cfg.seed)?, &mut out);
    push(regularization(cfg.regularization_states, cfg.seed, &cfg.heavy_opt)?, &mut out);
    push(oracle_equivalence(cfg.oracle_instances, cfg.seed, &cfg.opt, &budget)?, &mut out);
    Ok(out)
}
