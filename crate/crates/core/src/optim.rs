//! Multistart descent over products of complex isometries (Stiefel manifolds).
//!
//! Points move by left multiplication `V ← exp(tA) V` with an anti-Hermitian generator
//! `A` whose action on `V` is the search direction. `A` has rank at most `2r`, so the
//! exponential is evaluated in a `2r`-dimensional subspace and the cost per step is
//! independent of the ambient unitary group size. Search directions are conjugate
//! gradients built from the Euclidean gradient `Γ = ∂f/∂V̄`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::qmat::linalg::{self, AntiHermitianExp, CMat};

/// Smooth real function of one or more isometries.
pub trait Objective: Sync {
    /// Value and the Euclidean gradient `∂f/∂V̄` of each block.
    ///
    /// The gradient convention is `df = 2 Re Σ_b Tr(Γ_b† dV_b)`.
    fn value_and_grad(&self, point: &[CMat]) -> (f64, Vec<CMat>);

    fn value(&self, point: &[CMat]) -> f64 {
        self.value_and_grad(point).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    BudgetExhausted,
}

/// Dimensions of the two purifying ancillas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncillaDims {
    pub a2: usize,
    pub b2: usize,
}

impl AncillaDims {
    pub fn total(&self) -> usize {
        self.a2 * self.b2
    }
}

/// Optimizer settings, also the on-disk config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Stop once the objective improves by less than this over [`CONVERGENCE_WINDOW`] iterations.
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ancilla: Option<AncillaDims>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { restarts: 32, max_iter: 500, seed: 0, tol: 1e-9, ancilla: None }
    }
}

impl OptimizerConfig {
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ancilla(mut self, a2: usize, b2: usize) -> Self {
        self.ancilla = Some(AncillaDims { a2, b2 });
        self
    }

    pub fn settings(&self) -> DescentSettings {
        DescentSettings { max_iter: self.max_iter, tol: self.tol, ..DescentSettings::default() }
    }
}

pub const CONVERGENCE_WINDOW: usize = 20;
/// Size of the random kick applied when the line search stalls.
pub const STALL_KICK: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
pub struct DescentSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub window: usize,
    pub max_stalls: usize,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-9, window: CONVERGENCE_WINDOW, max_stalls: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct Descent {
    pub point: Vec<CMat>,
    pub value: f64,
    pub iterations: usize,
    pub status: Status,
}

/// Exponential-map geodesic `t ↦ exp(tA) V` through one block with initial velocity `D`.
///
/// `A = V Ω V† + D⊥ V† − V D⊥†` with `Ω = V†D`, written in the basis `[V, Q]` of its range.
struct BlockGeodesic {
    basis: CMat,
    gen: CMat,
    exp: AntiHermitianExp,
    rank: usize,
}

impl BlockGeodesic {
    fn along(v: &CMat, d: &CMat) -> Self {
        let (n, r) = (v.nrows(), v.ncols());
        let omega = v.adjoint() * d;
        let skew = (&omega - omega.adjoint()).scale(0.5);
        let (basis, gen) = if n > r {
            let qr = (d - v * &omega).qr();
            let q = qr.q();
            let rr = qr.r();
            let m = q.ncols();
            let mut g = CMat::zeros(r + m, r + m);
            g.view_mut((0, 0), (r, r)).copy_from(&skew);
            g.view_mut((0, r), (r, m)).copy_from(&(-rr.adjoint()));
            g.view_mut((r, 0), (m, r)).copy_from(&rr);
            let mut basis = CMat::zeros(n, r + m);
            basis.view_mut((0, 0), (n, r)).copy_from(v);
            basis.view_mut((0, r), (n, m)).copy_from(&q);
            (basis, g)
        } else {
            (v.clone(), skew)
        };
        let exp = AntiHermitianExp::new(&gen);
        Self { basis, gen, exp, rank: r }
    }

    fn at(&self, t: f64) -> CMat {
        &self.basis * self.exp.at(t).columns(0, self.rank)
    }

    /// Velocity `A V(t)` of the geodesic at time `t`.
    fn velocity(&self, t: f64) -> CMat {
        &self.basis * (&self.gen * self.exp.at(t).columns(0, self.rank))
    }
}

/// Riemannian gradient `Γ − V Γ† V` for the canonical metric.
fn riemannian_grad(v: &CMat, g: &CMat) -> CMat {
    g - v * (g.adjoint() * v)
}

fn inner(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| linalg::trace(&(x.adjoint() * y)).re).sum()
}

/// Riemannian conjugate gradient (Polak-Ribière+) with Armijo backtracking along
/// exponential-map geodesics, from one starting point.
pub fn descend<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &O,
    start: Vec<CMat>,
    settings: &DescentSettings,
    rng: &mut R,
) -> Descent {
    let mut point = start;
    let (mut value, grads) = obj.value_and_grad(&point);
    let mut rgrad: Vec<CMat> = point.iter().zip(&grads).map(|(v, g)| riemannian_grad(v, g)).collect();
    let mut euclid = grads;
    let mut dir: Vec<CMat> = rgrad.iter().map(|g| -g).collect();
    let mut history = vec![value];
    let mut step = f64::NAN;
    let mut stalls = 0;
    let mut status = Status::BudgetExhausted;
    let mut iterations = 0;

    while iterations < settings.max_iter {
        iterations += 1;
        let gnorm = inner(&rgrad, &rgrad);
        if gnorm < 1e-26 {
            status = Status::Converged;
            break;
        }
        let mut slope = 2.0 * inner(&euclid, &dir);
        if slope >= 0.0 {
            dir = rgrad.iter().map(|g| -g).collect();
            slope = 2.0 * inner(&euclid, &dir);
        }
        let geodesics: Vec<BlockGeodesic> = point.iter().zip(&dir).map(|(v, d)| BlockGeodesic::along(v, d)).collect();
        let dnorm = inner(&dir, &dir).sqrt();
        if !step.is_finite() {
            step = 1.0 / dnorm;
        }
        let mut t = (2.0 * step).min(1e3 / dnorm);
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<CMat> = geodesics.iter().map(|g| g.at(t)).collect();
            let f = obj.value(&trial);
            if f <= value + 1e-4 * t * slope {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let mut transported = None;
        match accepted {
            Some(next) => {
                step = t;
                point = next;
                transported = Some(geodesics.iter().map(|g| g.velocity(t)).collect::<Vec<_>>());
            }
            None => {
                stalls += 1;
                if stalls > settings.max_stalls {
                    status = Status::Converged;
                    break;
                }
                let kicked: Vec<CMat> = point
                    .iter()
                    .map(|v| {
                        let g = linalg::complex_gaussian(v.nrows(), v.ncols(), rng);
                        let g = g.scale(STALL_KICK / g.norm().max(1e-300));
                        linalg::polar_isometry(&(v + g))
                    })
                    .collect();
                // keep the kick only if it does not lose more than it could gain
                if obj.value(&kicked) <= value + STALL_KICK {
                    point = kicked;
                }
                step = f64::NAN;
            }
        }
        if iterations % 25 == 0 {
            point = point.iter().map(linalg::polar_isometry).collect();
            transported = None;
        }
        let (v, g) = obj.value_and_grad(&point);
        value = v;
        let new_rgrad: Vec<CMat> = point.iter().zip(&g).map(|(v, g)| riemannian_grad(v, g)).collect();
        euclid = g;
        dir = match transported {
            Some(prev) => {
                let diff: Vec<CMat> = new_rgrad.iter().zip(&rgrad).map(|(a, b)| a - b).collect();
                let beta = (inner(&new_rgrad, &diff) / gnorm).max(0.0);
                new_rgrad.iter().zip(&prev).map(|(g, p)| p.scale(beta) - g).collect()
            }
            None => new_rgrad.iter().map(|g| -g).collect(),
        };
        rgrad = new_rgrad;
        history.push(value);
        let k = history.len() - 1;
        if k >= settings.window && history[k - settings.window] - value < settings.tol {
            status = Status::Converged;
            break;
        }
    }
    Descent { point, value, iterations, status }
}

/// Reproducible generator for restart `index` of a run seeded with `seed`.
pub fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct Multistart {
    pub best: Descent,
    pub best_index: usize,
    pub restarts_used: usize,
    /// Final value of every restart, in restart order.
    pub values: Vec<f64>,
}

/// Runs `restarts` independent descents; `start(j, rng)` builds the starting point of restart `j`.
///
/// Restart `j` depends only on `(seed, j)`, so a run with more restarts extends a run with fewer.
pub fn multistart<O, F>(obj: &O, restarts: usize, seed: u64, settings: &DescentSettings, start: F) -> Multistart
where
    O: Objective + ?Sized,
    F: Fn(usize, &mut ChaCha8Rng) -> Vec<CMat> + Sync,
{
    assert!(restarts > 0, "multistart needs at least one restart");
    let runs: Vec<Descent> = (0..restarts)
        .into_par_iter()
        .map(|j| {
            let mut rng = restart_rng(seed, j);
            let p0 = start(j, &mut rng);
            descend(obj, p0, settings, &mut rng)
        })
        .collect();
    let values: Vec<f64> = runs.iter().map(|d| d.value).collect();
    let best_index = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one restart");
    let best = runs.into_iter().nth(best_index).expect("index in range");
    Multistart { best, best_index, restarts_used: restarts, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::linalg::{complex_gaussian, hermitize, haar_isometry};

    /// `Re Tr(V† H V)`: minimum over isometries is the sum of the `r` smallest eigenvalues.
    struct Rayleigh(CMat);

    impl Objective for Rayleigh {
        fn value_and_grad(&self, p: &[CMat]) -> (f64, Vec<CMat>) {
            let hv = &self.0 * &p[0];
            let f = linalg::trace(&(p[0].adjoint() * &hv)).re;
            (f, vec![hv])
        }
    }

    #[test]
    fn finds_lowest_eigen_subspace() {
        let mut rng = restart_rng(3, 0);
        let h = hermitize(&complex_gaussian(8, 8, &mut rng));
        let eig = linalg::eigvalsh(&h);
        let target: f64 = eig[..3].iter().sum();
        let obj = Rayleigh(h);
        let settings = DescentSettings { max_iter: 5000, tol: 1e-14, ..Default::default() };
        let ms = multistart(&obj, 2, 7, &settings, |_, rng| vec![haar_isometry(8, 3, rng)]);
        assert!((ms.best.value - target).abs() < 1e-8, "{} vs {target}", ms.best.value);
        let v = &ms.best.point[0];
        assert!(linalg::max_abs(&(v.adjoint() * v - CMat::identity(3, 3))) < 1e-10);
    }

    #[test]
    fn square_blocks_use_the_skew_part_only() {
        // On the full unitary group the Rayleigh objective is constant.
        let mut rng = restart_rng(4, 0);
        let h = hermitize(&complex_gaussian(4, 4, &mut rng));
        let obj = Rayleigh(h.clone());
        let d = descend(&obj, vec![haar_isometry(4, 4, &mut rng)], &DescentSettings::default(), &mut rng);
        assert!((d.value - linalg::trace(&h).re).abs() < 1e-10);
        assert_eq!(d.status, Status::Converged);
    }

    #[test]
    fn more_restarts_never_hurt() {
        let mut rng = restart_rng(5, 0);
        let h = hermitize(&complex_gaussian(6, 6, &mut rng));
        let obj = Rayleigh(h);
        let settings = DescentSettings { max_iter: 3, ..Default::default() };
        let start = |_: usize, rng: &mut ChaCha8Rng| vec![haar_isometry(6, 2, rng)];
        let few = multistart(&obj, 3, 11, &settings, start);
        let many = multistart(&obj, 6, 11, &settings, start);
        assert_eq!(&many.values[..3], &few.values[..]);
        assert!(many.best.value <= few.best.value);
    }

    #[test]
    fn config_json_defaults() {
        let c: OptimizerConfig = serde_json::from_str(r#"{"restarts": 4, "ancilla": {"a2": 2, "b2": 3}}"#).unwrap();
        assert_eq!(c.restarts, 4);
        assert_eq!(c.max_iter, 500);
        assert_eq!(c.ancilla, Some(AncillaDims { a2: 2, b2: 3 }));
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
