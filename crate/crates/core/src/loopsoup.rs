//! Markov loop soups in a fixed environment and their annealed (reinforced)
//! counterpart.
//!
//! In a fixed environment `u` the killed jump process on `V` has generator
//! `L^u` with off-diagonal entries `-1/2 W_ij e^{u_j - u_i}` and diagonal
//! entries `1/2 sum_k W_ik e^{u_k - u_i}` where the sum includes the cemetery.
//! The based-loop measure is `sum_i int_0^inf t^{-1} P_t^{(i,i)} dt`, and the
//! soup of intensity `alpha` is a Poisson point process with that intensity.
//! Sampling uses the pointed-loop decomposition: per-vertex trivial-loop
//! occupation masses are Gamma distributed, the number of nontrivial loops is
//! Poisson with mean `-alpha log det(I - Q)` for the jump chain `Q`, loop
//! lengths follow `tr(Q^k)/k`, skeletons are discrete bridges of `Q`, and
//! holding times are exponential per visit. The decomposition is validated
//! against the determinant-ratio Laplace transform, never trusted blindly.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};

use crate::environment::{nu_sample, EnvError, MCMCConfig};
use crate::graph::{AugmentedGraph, GraphError};

/// Series truncation cap for loop-length sampling.
const K_CAP: usize = 20_000;
/// Tolerance on the neglected loop-length tail `sum_{k>K} rho^k / k`.
const TAIL_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum SoupError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("no killing: jump chain spectral radius {rho} is not below 1")]
    NoKilling { rho: f64 },
    #[error("singular generator matrix")]
    Singular,
    #[error("loop-length series truncation exceeded: rho {rho}, tail bound {tail}")]
    TruncationExceeded { rho: f64, tail: f64 },
}

/// Generator of the killed quenched jump process together with its embedded
/// jump chain.
#[derive(Debug, Clone)]
pub struct LoopGenerator {
    /// `L^u` restricted to `V`; killing is folded into the diagonal.
    pub l: DMatrix<f64>,
    /// Jump chain `Q_ij = -L_ij / L_ii` off the diagonal, zero on it.
    pub q: DMatrix<f64>,
    /// Spectral radius of `Q`, strictly below 1 thanks to killing.
    pub rho: f64,
}

/// Build the quenched loop generator from an augmented graph and an
/// environment over the full vertex set (cemetery included, `u.len() = n+1`).
pub fn loop_generator(g: &AugmentedGraph, u: &[f64]) -> Result<LoopGenerator, SoupError> {
    let n = g.n();
    assert_eq!(u.len(), n + 1, "environment must cover the cemetery");
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..=n {
            if j == i {
                continue;
            }
            let w = g.weight(i, j);
            if w == 0.0 {
                continue;
            }
            let rate = 0.5 * w * (u[j] - u[i]).exp();
            diag += rate;
            if j < n {
                l[(i, j)] = -rate;
            }
        }
        l[(i, i)] = diag;
    }
    if l.diagonal().iter().any(|&d| d <= 0.0) {
        return Err(SoupError::NoKilling { rho: f64::INFINITY });
    }
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[(i, j)] = -l[(i, j)] / l[(i, i)];
            }
        }
    }
    let rho = q
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max);
    if rho >= 1.0 - 1e-12 {
        return Err(SoupError::NoKilling { rho });
    }
    Ok(LoopGenerator { l, q, rho })
}

/// Density of the path measure `P_t^{u,(i,j)}` at a given path. The skeleton
/// lists visited vertices (one more entry than `jump_times`); the trivial path
/// has mass `e^{-t L_ii}`.
pub fn path_measure_density(
    skeleton: &[usize],
    jump_times: &[f64],
    t: f64,
    gen: &LoopGenerator,
) -> f64 {
    assert_eq!(skeleton.len(), jump_times.len() + 1);
    let mut density = 1.0;
    let mut exponent = 0.0;
    let mut prev_time = 0.0;
    for (step, &jt) in jump_times.iter().enumerate() {
        let (a, b) = (skeleton[step], skeleton[step + 1]);
        if a == b {
            return 0.0;
        }
        density *= -gen.l[(a, b)];
        exponent += (jt - prev_time) * gen.l[(a, a)];
        prev_time = jt;
    }
    let last = *skeleton.last().unwrap();
    exponent += (t - prev_time) * gen.l[(last, last)];
    density * (-exponent).exp()
}

/// One nontrivial loop: the skeleton runs `base, i_1, ..., i_{k-1}, base` and
/// `holds[j]` is the holding time at `skeleton[j]` (the base hold merges the
/// initial and final sojourns).
#[derive(Debug, Clone)]
pub struct BasedLoop {
    pub skeleton: Vec<usize>,
    pub holds: Vec<f64>,
}

/// A draw from the loop soup: nontrivial loops plus per-vertex trivial-loop
/// occupation masses.
#[derive(Debug, Clone)]
pub struct LoopSoupSample {
    pub loops: Vec<BasedLoop>,
    pub trivial: Vec<f64>,
    pub alpha: f64,
}

/// Smallest `K` with `sum_{k>K} rho^k / k <= tol`, using the geometric bound
/// `rho^{K+1} / ((K+1)(1-rho))`. `None` when the cap is exceeded.
fn series_cutoff(rho: f64, tol: f64) -> Option<usize> {
    if rho <= 0.0 {
        return Some(0);
    }
    (0..=K_CAP).find(|&k| rho.powi(k as i32 + 1) / ((k as f64 + 1.0) * (1.0 - rho)) <= tol)
}

/// Reusable sampler: precomputes the jump-chain powers and the loop-length
/// distribution for a fixed generator and intensity.
pub struct SoupSampler<'a> {
    gen: &'a LoopGenerator,
    alpha: f64,
    /// `Q^0 .. Q^K`.
    powers: Vec<DMatrix<f64>>,
    /// Cumulative (unnormalized) loop-length masses `tr(Q^k)/k`, `k = 1..K`.
    length_cdf: Vec<f64>,
    poisson_mean: f64,
    tail: f64,
}

impl<'a> SoupSampler<'a> {
    pub fn new(gen: &'a LoopGenerator, alpha: f64) -> Result<Self, SoupError> {
        assert!(alpha >= 0.0);
        let n = gen.l.nrows();
        let k_max = series_cutoff(gen.rho, TAIL_TOL).ok_or(SoupError::TruncationExceeded {
            rho: gen.rho,
            tail: gen.rho.powi(K_CAP as i32 + 1) / ((K_CAP as f64 + 1.0) * (1.0 - gen.rho)),
        })?;
        let mut powers = vec![DMatrix::identity(n, n)];
        let mut length_cdf = Vec::with_capacity(k_max);
        let mut cum = 0.0;
        for k in 1..=k_max {
            let next = &powers[k - 1] * &gen.q;
            cum += next.trace() / k as f64;
            length_cdf.push(cum);
            powers.push(next);
        }
        let det = (DMatrix::identity(n, n) - &gen.q).lu().determinant();
        if det <= 0.0 {
            return Err(SoupError::Singular);
        }
        let tail = if gen.rho > 0.0 {
            gen.rho.powi(k_max as i32 + 1) / ((k_max as f64 + 1.0) * (1.0 - gen.rho))
        } else {
            0.0
        };
        Ok(Self {
            gen,
            alpha,
            powers,
            length_cdf,
            poisson_mean: -alpha * det.ln(),
            tail,
        })
    }

    pub fn k_max(&self) -> usize {
        self.powers.len() - 1
    }

    /// Bound on the neglected loop-length mass beyond `k_max`.
    pub fn truncation_tail(&self) -> f64 {
        self.tail
    }

    pub fn sample(&self, rng: &mut impl Rng) -> LoopSoupSample {
        let n = self.gen.l.nrows();
        let mut trivial = vec![0.0; n];
        if self.alpha == 0.0 {
            return LoopSoupSample {
                loops: vec![],
                trivial,
                alpha: self.alpha,
            };
        }
        for (i, slot) in trivial.iter_mut().enumerate() {
            let gamma = Gamma::new(self.alpha, 1.0 / self.gen.l[(i, i)]).unwrap();
            *slot = gamma.sample(rng);
        }
        let count = if self.poisson_mean > 0.0 {
            Poisson::new(self.poisson_mean).unwrap().sample(rng) as usize
        } else {
            0
        };
        let loops = (0..count).map(|_| self.sample_loop(rng)).collect();
        LoopSoupSample {
            loops,
            trivial,
            alpha: self.alpha,
        }
    }

    fn sample_loop(&self, rng: &mut impl Rng) -> BasedLoop {
        let n = self.gen.l.nrows();
        let total = *self.length_cdf.last().unwrap();
        let target = rng.gen_range(0.0..total);
        let k = self.length_cdf.partition_point(|&c| c <= target) + 1;
        // base point proportional to the diagonal of Q^k
        let diag: Vec<f64> = (0..n).map(|i| self.powers[k][(i, i)]).collect();
        let base = sample_weighted(&diag, rng);
        // bridge of length k from base back to base by sequential conditioning
        let mut skeleton = vec![base];
        let mut cur = base;
        for step in 0..k - 1 {
            // steps remaining from the chosen vertex back to the base
            let remaining = k - step - 1;
            let weights: Vec<f64> = (0..n)
                .map(|w| self.gen.q[(cur, w)] * self.powers[remaining][(w, base)])
                .collect();
            cur = sample_weighted(&weights, rng);
            skeleton.push(cur);
        }
        let holds = skeleton
            .iter()
            .map(|&v| Exp::new(self.gen.l[(v, v)]).unwrap().sample(rng))
            .collect();
        skeleton.push(base);
        BasedLoop { skeleton, holds }
    }
}

fn sample_weighted(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.gen_range(0.0..total);
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Draw one soup; for repeated draws build a [`SoupSampler`] once.
pub fn sample_quenched_soup(
    gen: &LoopGenerator,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<LoopSoupSample, SoupError> {
    Ok(SoupSampler::new(gen, alpha)?.sample(rng))
}

/// Per-vertex occupation field: trivial masses plus every loop's holding
/// times.
pub fn occupation_field(s: &LoopSoupSample) -> Vec<f64> {
    let mut occ = s.trivial.clone();
    for lp in &s.loops {
        for (v, h) in lp.skeleton.iter().zip(&lp.holds) {
            occ[*v] += h;
        }
    }
    occ
}

/// Exact Laplace transform of the occupation field:
/// `E[e^{-<k, occupation>}] = (det L / det(L + diag k))^alpha`.
pub fn soup_laplace_oracle(gen: &LoopGenerator, k: &[f64], alpha: f64) -> Result<f64, SoupError> {
    let n = gen.l.nrows();
    assert_eq!(k.len(), n);
    let det_l = gen.l.clone().lu().determinant();
    let mut shifted = gen.l.clone();
    for i in 0..n {
        shifted[(i, i)] += k[i];
    }
    let det_shifted = shifted.lu().determinant();
    if det_l <= 0.0 || det_shifted <= 0.0 {
        return Err(SoupError::Singular);
    }
    Ok((det_l / det_shifted).powf(alpha))
}

/// Annealed soup expectation: outer Monte Carlo over environments rooted at
/// the cemetery, inner soup sampling. The observable sees the occupation
/// field over `V`. Returns `(mean, standard error)`; the standard error uses
/// batch means to absorb chain autocorrelation.
pub fn reinforced_soup_expectation(
    g: &AugmentedGraph,
    alpha: f64,
    observable: &dyn Fn(&[f64]) -> f64,
    outer: usize,
    inner: usize,
    cfg: &MCMCConfig,
    rng: &mut impl Rng,
) -> Result<(f64, f64), SoupError> {
    assert!(alpha > 0.0 && outer > 0 && inner > 0);
    let flat = g.flatten();
    let z = vec![1.0; flat.n()];
    let (envs, _diag) = nu_sample(&flat, &z, g.cemetery(), cfg, outer, rng)?;
    let mut means = Vec::with_capacity(outer);
    for env in &envs {
        let gen = loop_generator(g, &env.u)?;
        let sampler = SoupSampler::new(&gen, alpha)?;
        let mut acc = 0.0;
        for _ in 0..inner {
            acc += observable(&occupation_field(&sampler.sample(rng)));
        }
        means.push(acc / inner as f64);
    }
    Ok(crate::environment::batch_mean_stderr(&means))
}

/// Occupation-field sample dump, one row per sample.
pub fn occupations_to_csv(samples: &[Vec<f64>]) -> String {
    let n = samples.first().map_or(0, Vec::len);
    let mut out = (0..n).map(|i| format!("occ{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in samples {
        let line = row
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}
