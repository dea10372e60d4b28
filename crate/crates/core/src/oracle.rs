//! Brute-force reference implementations.
//!
//! Nothing here calls into the matrix routines of [`crate::qmat`] or [`crate::channels`]:
//! inputs are read entry by entry and all linear algebra is plain loops over `Vec<Complex64>`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{CPMap, OneWayLOCC};
use crate::ensemble::Ensemble;
use crate::eop::Cut;
use crate::error::{Error, Result};
use crate::qmat::{CMat, DensityMatrix, SpaceShape};

type C64 = Complex64;
const Z: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub samples: usize,
    pub seed: u64,
}

impl SearchBudget {
    pub fn new(samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidConfig("search budget needs at least one sample".into()));
        }
        Ok(Self { samples, seed })
    }

    fn rng(&self, stream: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { samples: 2000, seed: 0 }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct Dense {
    rows: usize,
    cols: usize,
    a: Vec<C64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, a: vec![Z; rows * cols] }
    }

    fn from_cmat(m: &CMat) -> Self {
        let mut d = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                d.a[i * m.ncols() + j] = m[(i, j)];
            }
        }
        d
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.a[i * self.cols + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        &mut self.a[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.at(i, j)
    }

    fn mul(&self, other: &Dense) -> Dense {
        let mut out = Dense::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let x = self.at(i, k);
                if x == Z {
                    continue;
                }
                for j in 0..other.cols {
                    out.a[i * other.cols + j] += x * other.at(k, j);
                }
            }
        }
        out
    }

    fn adjoint(&self) -> Dense {
        let mut out = Dense::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.at_mut(j, i) = self.at(i, j).conj();
            }
        }
        out
    }

    /// Largest entrywise deviation from a qmat matrix.
    pub fn max_deviation(&self, m: &CMat) -> f64 {
        if m.nrows() != self.rows || m.ncols() != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self.at(i, j) - m[(i, j)]).norm());
            }
        }
        worst
    }
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix. Columns of the second value are
/// eigenvectors; eigenvalues are unsorted.
pub fn jacobi_eigh(h: &Dense) -> (Vec<f64>, Dense) {
    let n = h.rows;
    let mut a = h.clone();
    let mut v = Dense::zeros(n, n);
    for i in 0..n {
        *v.at_mut(i, i) = C64::new(1.0, 0.0);
    }
    let scale: f64 = a.a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a.at(p, q).norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let z = a.at(p, q);
                let mag = z.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let e = z / mag;
                let app = a.at(p, p).re;
                let aqq = a.at(q, q).re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let gpp = C64::new(c, 0.0);
                let gpq = C64::new(s, 0.0);
                let gqp = -e.conj() * s;
                let gqq = e.conj() * c;
                for k in 0..n {
                    let (akp, akq) = (a.at(k, p), a.at(k, q));
                    *a.at_mut(k, p) = akp * gpp + akq * gqp;
                    *a.at_mut(k, q) = akp * gpq + akq * gqq;
                    let (vkp, vkq) = (v.at(k, p), v.at(k, q));
                    *v.at_mut(k, p) = vkp * gpp + vkq * gqp;
                    *v.at_mut(k, q) = vkp * gpq + vkq * gqq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a.at(p, k), a.at(q, k));
                    *a.at_mut(p, k) = gpp.conj() * apk + gqp.conj() * aqk;
                    *a.at_mut(q, k) = gpq.conj() * apk + gqq.conj() * aqk;
                }
                *a.at_mut(p, q) = Z;
                *a.at_mut(q, p) = Z;
            }
        }
    }
    ((0..n).map(|i| a.at(i, i).re).collect(), v)
}

fn entropy_of(vals: &[f64]) -> f64 {
    let mut h = 0.0;
    for &l in vals {
        if l > 1e-15 {
            h -= l * l.log2();
        }
    }
    h.max(0.0)
}

/// Eigenvalues below this fraction of the largest are roundoff and get a zero square root.
const ROOT_FLOOR: f64 = 1e-14;

fn root(l: f64, top: f64) -> f64 {
    if l <= ROOT_FLOOR * top.max(1.0) {
        0.0
    } else {
        l.sqrt()
    }
}

fn sqrt_psd(h: &Dense) -> Dense {
    let (vals, v) = jacobi_eigh(h);
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b));
    let n = h.rows;
    let mut out = Dense::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Z;
            for (k, &l) in vals.iter().enumerate() {
                acc += v.at(i, k) * root(l, top) * v.at(j, k).conj();
            }
            *out.at_mut(i, j) = acc;
        }
    }
    out
}

pub fn entropy(rho: &DensityMatrix) -> f64 {
    entropy_of(&jacobi_eigh(&Dense::from_cmat(rho.matrix())).0)
}

/// `Tr √(√ρ σ √ρ)`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let s = sqrt_psd(&Dense::from_cmat(rho.matrix()));
    let inner = s.mul(&Dense::from_cmat(sigma.matrix())).mul(&s);
    let (vals, _) = jacobi_eigh(&inner);
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b));
    vals.iter().map(|&l| root(l, top)).sum()
}

/// `Re Tr √ρ √σ`.
pub fn sqrt_overlap(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let a = sqrt_psd(&Dense::from_cmat(rho.matrix()));
    let b = sqrt_psd(&Dense::from_cmat(sigma.matrix()));
    let mut acc = Z;
    for i in 0..a.rows {
        for k in 0..a.rows {
            acc += a.at(i, k) * b.at(k, i);
        }
    }
    acc.re
}

fn digits(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for j in (0..dims.len()).rev() {
        out[j] = idx % dims[j];
        idx /= dims[j];
    }
    out
}

fn undigits(ds: &[usize], dims: &[usize]) -> usize {
    ds.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

/// Partial trace by summing over every traced multi-index.
pub fn partial_trace_entries(m: &Dense, dims: &[usize], keep: &[bool]) -> Dense {
    let kept: Vec<usize> = dims.iter().zip(keep).filter(|(_, &k)| k).map(|(&d, _)| d).collect();
    let traced: Vec<usize> = dims.iter().zip(keep).filter(|(_, &k)| !k).map(|(&d, _)| d).collect();
    let dk: usize = kept.iter().product();
    let dt: usize = traced.iter().product();
    let mut out = Dense::zeros(dk, dk);
    let combine = |ki: &[usize], ti: &[usize]| {
        let (mut a, mut b) = (ki.iter(), ti.iter());
        let full: Vec<usize> = keep.iter().map(|&k| if k { *a.next().unwrap() } else { *b.next().unwrap() }).collect();
        undigits(&full, dims)
    };
    for i in 0..dk {
        let di = digits(i, &kept);
        for j in 0..dk {
            let dj = digits(j, &kept);
            let mut acc = Z;
            for t in 0..dt {
                let dtt = digits(t, &traced);
                acc += m.at(combine(&di, &dtt), combine(&dj, &dtt));
            }
            *out.at_mut(i, j) = acc;
        }
    }
    out
}

/// Max deviation between [`DensityMatrix::partial_trace`] and the loop version.
pub fn crosscheck_partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<f64> {
    let labels = rho.shape().labels();
    let mask: Vec<bool> = labels.iter().map(|l| keep.contains(l)).collect();
    let reference = partial_trace_entries(&Dense::from_cmat(rho.matrix()), &rho.shape().dims(), &mask);
    let ours = rho.partial_trace(keep)?;
    Ok(reference.max_deviation(ours.matrix()))
}

/// `Σ_K K ρ K†` with every product written out.
pub fn apply_cp_entries(map: &CPMap, rho: &Dense) -> Dense {
    let dout = map.out_shape().total_dim();
    let din = map.in_shape().total_dim();
    let mut out = Dense::zeros(dout, dout);
    for k in map.kraus() {
        for i in 0..dout {
            for j in 0..dout {
                let mut acc = Z;
                for a in 0..din {
                    let kia = k[(i, a)];
                    if kia == Z {
                        continue;
                    }
                    for b in 0..din {
                        acc += kia * rho.at(a, b) * k[(j, b)].conj();
                    }
                }
                *out.at_mut(i, j) += acc;
            }
        }
    }
    out
}

/// One-way LOCC by direct index summation over `(K_i ⊗ L) ρ (K_i ⊗ L)†`.
pub fn apply_locc_entries(protocol: &OneWayLOCC, rho: &Dense) -> Dense {
    let ia = protocol.a_instrument().in_shape().total_dim();
    let oa = protocol.a_instrument().out_shape().total_dim();
    let ib = protocol.b_maps()[0].in_shape().total_dim();
    let ob = protocol.b_maps()[0].out_shape().total_dim();
    let mut out = Dense::zeros(oa * ob, oa * ob);
    for (branch, bmap) in protocol.a_instrument().branches().iter().zip(protocol.b_maps()) {
        for ka in branch.kraus() {
            for lb in bmap.kraus() {
                for x in 0..oa {
                    for y in 0..ob {
                        for u in 0..oa {
                            for v in 0..ob {
                                let mut acc = Z;
                                for a in 0..ia {
                                    for b in 0..ib {
                                        let left = ka[(x, a)] * lb[(y, b)];
                                        if left == Z {
                                            continue;
                                        }
                                        for c in 0..ia {
                                            for d in 0..ib {
                                                acc += left
                                                    * rho.at(a * ib + b, c * ib + d)
                                                    * (ka[(u, c)] * lb[(v, d)]).conj();
                                            }
                                        }
                                    }
                                }
                                *out.at_mut(x * ob + y, u * ob + v) += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Dense {
    let mut d = Dense::zeros(rows, cols);
    for z in d.a.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *z = C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
    }
    d
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> Dense {
    let g = gaussian(n, n, rng);
    let mut m = g.mul(&g.adjoint());
    let tr: f64 = (0..n).map(|i| m.at(i, i).re).sum();
    for z in m.a.iter_mut() {
        *z /= tr;
    }
    m
}

/// Haar isometry from Gram-Schmidt on Gaussian columns (positive `R` diagonal).
pub fn haar_isometry(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Dense {
    let mut g = gaussian(n, r, rng);
    for j in 0..r {
        for _pass in 0..2 {
            for k in 0..j {
                let mut dot = Z;
                for i in 0..n {
                    dot += g.at(i, k).conj() * g.at(i, j);
                }
                for i in 0..n {
                    let gik = g.at(i, k);
                    *g.at_mut(i, j) -= dot * gik;
                }
            }
        }
        let norm: f64 = (0..n).map(|i| g.at(i, j).norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            *g.at_mut(i, j) /= norm;
        }
    }
    g
}

/// `ρ` regrouped as `[A, B]` by the cut, using only index arithmetic.
fn regroup(rho: &DensityMatrix, cut: &Cut) -> Result<(Dense, usize, usize)> {
    let shape = rho.shape();
    let labels = shape.labels();
    let dims = shape.dims();
    let order: Vec<usize> = cut
        .a_labels
        .iter()
        .chain(cut.b_labels.iter())
        .map(|l| labels.iter().position(|x| x == l).ok_or_else(|| Error::Shape(format!("unknown label {l}"))))
        .collect::<Result<_>>()?;
    let mut seen = order.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != labels.len() || order.len() != labels.len() || cut.a_labels.is_empty() || cut.b_labels.is_empty() {
        return Err(Error::Shape(format!("cut does not partition {shape}")));
    }
    let new_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let da: usize = new_dims[..cut.a_labels.len()].iter().product();
    let n = rho.dim();
    let perm: Vec<usize> = (0..n)
        .map(|i| {
            let nd = digits(i, &new_dims);
            let mut od = vec![0; dims.len()];
            for (j, &k) in order.iter().enumerate() {
                od[k] = nd[j];
            }
            undigits(&od, &dims)
        })
        .collect();
    let src = Dense::from_cmat(rho.matrix());
    let mut out = Dense::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            *out.at_mut(i, j) = src.at(perm[i], perm[j]);
        }
    }
    Ok((out, da, n / da))
}

/// `H` of the `A A2` marginal of `Σ_k √λ_k |v_k⟩ ⊗ V|k⟩`.
fn purification_value(scaled: &Dense, iso: &Dense, da: usize, db: usize, a2: usize, b2: usize) -> f64 {
    let r = scaled.cols;
    let rows = da * a2;
    let cols = db * b2;
    let mut m = Dense::zeros(rows, cols);
    for a in 0..da {
        for b in 0..db {
            for x in 0..a2 {
                for y in 0..b2 {
                    let mut acc = Z;
                    for k in 0..r {
                        acc += scaled.at(a * db + b, k) * iso.at(x * b2 + y, k);
                    }
                    *m.at_mut(a * a2 + x, b * b2 + y) = acc;
                }
            }
        }
    }
    let gram = if rows <= cols { m.mul(&m.adjoint()) } else { m.adjoint().mul(&m) };
    entropy_of(&jacobi_eigh(&gram).0)
}

struct Support {
    scaled: Dense,
    da: usize,
    db: usize,
}

fn support(rho: &DensityMatrix, cut: &Cut) -> Result<Support> {
    let (m, da, db) = regroup(rho, cut)?;
    let (vals, v) = jacobi_eigh(&m);
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 1e-12).collect();
    let mut scaled = Dense::zeros(m.rows, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        for i in 0..m.rows {
            *scaled.at_mut(i, j) = v.at(i, k) * vals[k].sqrt();
        }
    }
    Ok(Support { scaled, da, db })
}

/// Running minimum of the random-search objective after each sample.
pub fn eop_random_search_trace(rho: &DensityMatrix, cut: &Cut, budget: &SearchBudget) -> Result<Vec<f64>> {
    let sup = support(rho, cut)?;
    let (a2, b2) = match cut.ancilla {
        Some(a) => (a.a2, a.b2),
        None => (sup.da * sup.db, sup.da * sup.db),
    };
    let r = sup.scaled.cols;
    if a2 * b2 < r || a2 == 0 || b2 == 0 {
        return Err(Error::InvalidConfig(format!("ancilla {a2}x{b2} is smaller than rank {r}")));
    }
    if budget.samples == 0 {
        return Err(Error::InvalidConfig("search budget needs at least one sample".into()));
    }
    let values: Vec<f64> = (0..budget.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = budget.rng(s);
            let iso = haar_isometry(a2 * b2, r, &mut rng);
            purification_value(&sup.scaled, &iso, sup.da, sup.db, a2, b2)
        })
        .collect();
    let mut best = f64::INFINITY;
    Ok(values
        .into_iter()
        .map(|v| {
            best = best.min(v);
            best
        })
        .collect())
}

/// Minimum of `H(ρ_{A A2})` over Haar-random purifications. An upper bound on `E_p`.
pub fn eop_random_search(rho: &DensityMatrix, cut: &Cut, budget: &SearchBudget) -> Result<f64> {
    Ok(*eop_random_search_trace(rho, cut, budget)?.last().expect("at least one sample"))
}

/// Estimate for `Σ p_i |ii⟩⟨ii|`: the better of random search and the purification
/// `Σ √p_i |i⟩_A |i⟩_B |i⟩_{A2}`.
pub fn classical_correlated_reference(p: &[f64], budget: &SearchBudget) -> Result<f64> {
    let n = p.len();
    if n == 0 || p.iter().any(|&x| x.is_nan() || x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput("not a probability vector".into()));
    }
    let mut m = CMat::zeros(n * n, n * n);
    for (i, &pi) in p.iter().enumerate() {
        m[(i * n + i, i * n + i)] = C64::new(pi, 0.0);
    }
    let rho = DensityMatrix::new(SpaceShape::bipartite("A", n, "B", n)?, m)?;
    // certificate: ρ_{A A2} = Σ p_i |ii⟩⟨ii|
    let mut cert = Dense::zeros(n * n, n * n);
    for (i, &pi) in p.iter().enumerate() {
        *cert.at_mut(i * n + i, i * n + i) = C64::new(pi, 0.0);
    }
    let certificate = entropy_of(&jacobi_eigh(&cert).0);
    let cut = Cut::new(&["A"], &["B"]).with_ancilla(n, n);
    let searched = eop_random_search(&rho, &cut, budget)?;
    Ok(searched.min(certificate))
}

/// Random search for `H^ext`: independent Haar isometries on each member's reference.
pub fn hext_random_search(e: &Ensemble, ref_dim: usize, budget: &SearchBudget) -> Result<f64> {
    let mut members = Vec::new();
    for m in e.members() {
        let (vals, v) = jacobi_eigh(&Dense::from_cmat(m.state.matrix()));
        let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 1e-12).collect();
        if keep.len() > ref_dim {
            return Err(Error::InvalidConfig(format!(
                "reference dimension {ref_dim} is below rank {}",
                keep.len()
            )));
        }
        let d = vals.len();
        let mut scaled = Dense::zeros(d, keep.len());
        for (j, &k) in keep.iter().enumerate() {
            for i in 0..d {
                *scaled.at_mut(i, j) = v.at(i, k) * vals[k].sqrt();
            }
        }
        members.push((m.prob, scaled));
    }
    let d = e.state_dim();
    let best = (0..budget.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = budget.rng(s);
            let mut sigma = Dense::zeros(d * ref_dim, d * ref_dim);
            for (p, scaled) in &members {
                let iso = haar_isometry(ref_dim, scaled.cols, &mut rng);
                let w: Vec<C64> = (0..d * ref_dim)
                    .map(|idx| {
                        let (b, k) = (idx / ref_dim, idx % ref_dim);
                        (0..scaled.cols).map(|j| scaled.at(b, j) * iso.at(k, j)).sum()
                    })
                    .collect();
                for i in 0..w.len() {
                    for j in 0..w.len() {
                        *sigma.at_mut(i, j) += w[i] * w[j].conj() * *p;
                    }
                }
            }
            entropy_of(&jacobi_eigh(&sigma).0)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

/// Max deviation between [`crate::channels::apply_locc`] and the loop version on `ρ`
/// and on `budget.samples - 1` further random inputs.
pub fn crosscheck_channel(protocol: &OneWayLOCC, rho: &DensityMatrix, budget: &SearchBudget) -> Result<f64> {
    let mut worst = 0.0f64;
    let n = rho.dim();
    for s in 0..budget.samples.max(1) {
        let input = if s == 0 {
            rho.clone()
        } else {
            DensityMatrix::new(rho.shape().clone(), to_cmat(&random_state(n, &mut budget.rng(s))))?
        };
        let ours = crate::channels::apply_locc(protocol, &input)?;
        let reference = apply_locc_entries(protocol, &Dense::from_cmat(input.matrix()));
        worst = worst.max(reference.max_deviation(ours.matrix()));
    }
    Ok(worst)
}

/// Max deviation between [`crate::channels::apply_cp`] and the loop version.
pub fn crosscheck_cp(map: &CPMap, rho: &DensityMatrix) -> Result<f64> {
    let ours = crate::channels::apply_cp(map, rho)?;
    let reference = apply_cp_entries(map, &Dense::from_cmat(rho.matrix()));
    Ok(reference.max_deviation(ours.matrix()))
}

fn to_cmat(d: &Dense) -> CMat {
    CMat::from_fn(d.rows, d.cols, |i, j| d.at(i, j))
}
