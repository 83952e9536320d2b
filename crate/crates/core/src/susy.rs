//! Expectations of the hyperbolic sigma field and of the supersymmetric free
//! field on small graphs: bosonic tensor quadrature combined with exact
//! fermionic extraction through the Grassmann engine.
//!
//! Conventions: each vertex carries a spin `(x, y, z, xi, eta)` with
//! `z = sqrt(1 + x^2 + y^2 + 2 xi eta)`; the pinned vertex is fixed to the
//! boosted zero vector `(sinh s, 0, cosh s, 0, 0)` (hyperbolic case) or
//! `(sinh s, 0, 0, 0)` (free case).

use crate::graph::{AugmentedGraph, WeightedGraph};
use crate::grassmann::{GrassmannAlgebra, GrassmannElement, GrassmannError, Smooth, SqrtFn};
use crate::quad::{sinh_rule, QuadError, QuadratureSpec, Rule1d, TensorRule};
use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SusyError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Grassmann(#[from] GrassmannError),
    #[error("bosonic quadratic form is not positive definite")]
    NotPositiveDefinite,
    #[error("unpinned expectation requires an observable declared as decaying")]
    NonDecayingObservable,
}

/// Pinned vertex and boost parameter of the boundary condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub pinned: usize,
    pub boost: f64,
}

/// A spin vector with all five components kept as Grassmann elements, so
/// boosts of on-hyperboloid points (whose `z` carries a soul) stay exact.
#[derive(Debug, Clone)]
pub struct SpinVector {
    pub x: GrassmannElement,
    pub y: GrassmannElement,
    pub z: GrassmannElement,
    pub xi: GrassmannElement,
    pub eta: GrassmannElement,
}

impl SpinVector {
    /// The zero vector `(0, 0, 1, 0, 0)`.
    pub fn zero(alg: &GrassmannAlgebra) -> Self {
        Self {
            x: alg.scalar(0.0),
            y: alg.scalar(0.0),
            z: alg.one(),
            xi: alg.zero(),
            eta: alg.zero(),
        }
    }

    /// Scalar spin `(sinh s, 0, cosh s, 0, 0)`, i.e. the boosted zero vector.
    pub fn boosted_zero(alg: &GrassmannAlgebra, s: f64) -> Self {
        let mut v = Self::zero(alg);
        v.x = alg.scalar(s.sinh());
        v.z = alg.scalar(s.cosh());
        v
    }

    /// On-hyperboloid point with bosonic coordinates `(x, y)` and the
    /// fermion pair `pair`; `z` is the square-root super-function.
    pub fn on_hyperboloid(alg: &GrassmannAlgebra, pair: usize, x: f64, y: f64) -> Self {
        let arg = &alg.scalar(1.0 + x * x + y * y) + &alg.pair(pair).scale(2.0);
        Self {
            x: alg.scalar(x),
            y: alg.scalar(y),
            z: arg.apply_smooth(&SqrtFn).expect("argument >= 1"),
            xi: alg.xi(pair),
            eta: alg.eta(pair),
        }
    }

    /// Euclidean rotation in the `xy` plane.
    pub fn rotate(&self, alpha: f64) -> Self {
        let (sin, cos) = alpha.sin_cos();
        Self {
            x: &self.x.scale(cos) + &self.y.scale(sin),
            y: &self.x.scale(-sin) + &self.y.scale(cos),
            z: self.z.clone(),
            xi: self.xi.clone(),
            eta: self.eta.clone(),
        }
    }

    /// Lorentz boost in the `xz` plane.
    pub fn boost(&self, s: f64) -> Self {
        let (sh, ch) = (s.sinh(), s.cosh());
        Self {
            x: &self.x.scale(ch) + &self.z.scale(sh),
            y: self.y.clone(),
            z: &self.z.scale(ch) + &self.x.scale(sh),
            xi: self.xi.clone(),
            eta: self.eta.clone(),
        }
    }

    /// Indefinite inner product
    /// `x x' + y y' - z z' + xi eta' - eta xi'`.
    pub fn dot(&self, other: &SpinVector) -> GrassmannElement {
        let mut out = &self.x * &other.x;
        out = &out + &(&self.y * &other.y);
        out = &out - &(&self.z * &other.z);
        out = &out + &(&self.xi * &other.eta);
        out = &out - &(&self.eta * &other.xi);
        out
    }
}

/// Which hyperbolic measure an expectation is taken against.
pub enum H22Measure<'g> {
    /// Augmented graph, pinned at the cemetery with boost `s`.
    PinnedAtCemetery(&'g AugmentedGraph, f64),
    /// Plain graph, pinned at a vertex of `V` with boost `s`.
    PinnedAt(&'g WeightedGraph, usize, f64),
    /// Non-normalizable unpinned measure; only valid for observables that
    /// provide their own decay.
    Unpinned(&'g WeightedGraph),
}

impl H22Measure<'_> {
    fn vertex_count(&self) -> usize {
        match self {
            H22Measure::PinnedAtCemetery(g, _) => g.n() + 1,
            H22Measure::PinnedAt(g, _, _) | H22Measure::Unpinned(g) => g.n(),
        }
    }

    fn pinned(&self) -> Option<(usize, f64)> {
        match self {
            H22Measure::PinnedAtCemetery(g, s) => Some((g.cemetery(), *s)),
            H22Measure::PinnedAt(_, a, s) => Some((*a, *s)),
            H22Measure::Unpinned(_) => None,
        }
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        match self {
            H22Measure::PinnedAtCemetery(g, _) => g.edges(),
            H22Measure::PinnedAt(g, _, _) | H22Measure::Unpinned(g) => g.edges(),
        }
    }
}

/// Field configuration handed to observables: one spin per vertex of the full
/// vertex set, pinned vertex preset to the boosted zero vector.
pub struct H22Point {
    pub alg: GrassmannAlgebra,
    pub spin: Vec<SpinVector>,
    /// Fermion pair index per vertex; `None` for the pinned vertex.
    pub pair_of: Vec<Option<usize>>,
}

impl H22Point {
    pub fn x(&self, v: usize) -> f64 {
        self.spin[v].x.body()
    }

    pub fn y(&self, v: usize) -> f64 {
        self.spin[v].y.body()
    }

    pub fn z(&self, v: usize) -> &GrassmannElement {
        &self.spin[v].z
    }
}

pub type H22Observable<'a> = &'a dyn Fn(&H22Point) -> GrassmannElement;

/// Energy `-1/2 Phi Delta_W Phi = sum_edges W (Phi_i . Phi_j + 1)` as an even
/// Grassmann element.
pub fn h22_energy(spins: &[SpinVector], edges: &[(usize, usize, f64)]) -> GrassmannElement {
    let alg = spins[0].x.algebra();
    let mut energy = alg.zero();
    for &(i, j, w) in edges {
        let term = &spins[i].dot(&spins[j]) + &alg.one();
        energy = &energy + &term.scale(w);
    }
    energy
}

fn free_vertices(n_total: usize, pinned: Option<usize>) -> Vec<usize> {
    (0..n_total).filter(|&v| Some(v) != pinned).collect()
}

/// Per-axis exponential decay rates of the hyperbolic density: vertex `i`
/// decays at least like `e^{-r_i z_i}` with
/// `r_i = e^{-|s|} sum_j W_ij` (the boost can tilt the pinned contribution).
fn decay_rates(measure: &H22Measure, free: &[usize]) -> Vec<f64> {
    let n = measure.vertex_count();
    let s = measure.pinned().map_or(0.0, |(_, s)| s.abs());
    let mut rate = vec![0.0; n];
    for (i, j, w) in measure.edges() {
        rate[i] += w;
        rate[j] += w;
    }
    free.iter().map(|&v| rate[v] * (-s).exp()).collect()
}

fn h22_tensor_rule(rates: &[f64], nodes: usize, spec: &QuadratureSpec) -> TensorRule {
    let axes = rates
        .iter()
        .flat_map(|&r| {
            // undershooting the decay length is cheap, overshooting is not
            let scale = (0.6 * spec.scale / r.max(1e-12)).clamp(1e-3, 1e3);
            let rule = sinh_rule(nodes, scale, spec.stretch);
            [rule.clone(), rule]
        })
        .collect();
    TensorRule { axes }
}

fn h22_sweep(
    measure: &H22Measure,
    observables: &[H22Observable],
    nodes: usize,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>, SusyError> {
    let n_total = measure.vertex_count();
    let pinned = measure.pinned();
    let free = free_vertices(n_total, pinned.map(|(p, _)| p));
    let m = free.len();
    let alg = GrassmannAlgebra::new(m);
    let edges = measure.edges();

    let mut pair_of = vec![None; n_total];
    for (k, &v) in free.iter().enumerate() {
        pair_of[v] = Some(k);
    }

    let rates = decay_rates(measure, &free);
    let rule = h22_tensor_rule(&rates, nodes, spec);

    let recip = crate::grassmann::RecipFn;
    let norm = (2.0 * std::f64::consts::PI).powi(m as i32);
    let mut sums = vec![0.0; observables.len()];
    let mut err: Option<SusyError> = None;
    rule.for_each(|coords, w| {
        if err.is_some() {
            return;
        }
        let mut spins: Vec<SpinVector> = Vec::with_capacity(n_total);
        for v in 0..n_total {
            match pair_of[v] {
                Some(k) => {
                    spins.push(SpinVector::on_hyperboloid(&alg, k, coords[2 * k], coords[2 * k + 1]))
                }
                None => spins.push(SpinVector::boosted_zero(&alg, pinned.unwrap().1)),
            }
        }
        let energy = h22_energy(&spins, &edges);
        let mut density = energy.exp_even();
        for &v in &free {
            match spins[v].z.apply_smooth(&recip) {
                Ok(r) => density = &density * &r,
                Err(e) => {
                    err = Some(e.into());
                    return;
                }
            }
        }
        let point = H22Point {
            alg,
            spin: spins,
            pair_of: pair_of.clone(),
        };
        for (obs, sum) in observables.iter().zip(&mut sums) {
            let integrand = &density * &obs(&point);
            *sum += w * integrand.berezin_all() / norm;
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(sums),
    }
}

/// Hyperbolic-field expectations of several observables over one shared
/// density sweep. With `spec.check_convergence` set, a node-doubling run must
/// agree within `spec.tolerance`.
pub fn h22_expectation_many(
    measure: &H22Measure,
    observables: &[H22Observable],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>, SusyError> {
    if matches!(measure, H22Measure::Unpinned(_)) {
        return Err(SusyError::NonDecayingObservable);
    }
    h22_expectation_many_inner(measure, observables, spec)
}

/// Unpinned (non-normalizable) expectation. The caller asserts that every
/// observable supplies its own decay; constant observables diverge.
pub fn h22_expectation_unpinned(
    graph: &WeightedGraph,
    observables: &[H22Observable],
    observable_decays: bool,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>, SusyError> {
    if !observable_decays {
        return Err(SusyError::NonDecayingObservable);
    }
    h22_expectation_many_inner(&H22Measure::Unpinned(graph), observables, spec)
}

fn h22_expectation_many_inner(
    measure: &H22Measure,
    observables: &[H22Observable],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>, SusyError> {
    let coarse = h22_sweep(measure, observables, spec.nodes_per_axis, spec)?;
    if !spec.check_convergence {
        return Ok(coarse);
    }
    let fine = h22_sweep(measure, observables, 2 * spec.nodes_per_axis, spec)?;
    for (c, f) in coarse.iter().zip(&fine) {
        let moved = (f - c).abs() / f.abs().max(1.0);
        if moved > spec.tolerance {
            return Err(QuadError::NotConverged {
                moved,
                tol: spec.tolerance,
            }
            .into());
        }
    }
    Ok(fine)
}

pub fn h22_expectation(
    measure: &H22Measure,
    observable: H22Observable,
    spec: &QuadratureSpec,
) -> Result<f64, SusyError> {
    Ok(h22_expectation_many(measure, &[observable], spec)?[0])
}

/// Importance-sampled Monte Carlo fallback for three-vertex hyperbolic
/// expectations (six bosonic dimensions, beyond tensor-quadrature reach).
/// Proposals are independent per-coordinate Laplace draws matched to the
/// density's exponential decay. Returns `(mean, standard error)`.
pub fn h22_expectation_mc(
    measure: &H22Measure,
    observable: H22Observable,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64), SusyError> {
    let n_total = measure.vertex_count();
    let pinned = measure.pinned();
    let free = free_vertices(n_total, pinned.map(|(p, _)| p));
    let m = free.len();
    let alg = GrassmannAlgebra::new(m);
    let edges = measure.edges();
    let rates = decay_rates(measure, &free);
    let scales: Vec<f64> = rates.iter().map(|&r| (1.0 / r.max(1e-12)).clamp(0.3, 4.0)).collect();

    let mut pair_of = vec![None; n_total];
    for (k, &v) in free.iter().enumerate() {
        pair_of[v] = Some(k);
    }
    let recip = crate::grassmann::RecipFn;
    let norm = (2.0 * std::f64::consts::PI).powi(m as i32);

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        // Laplace proposal per bosonic coordinate.
        let mut coords = vec![0.0; 2 * m];
        let mut log_proposal = 0.0;
        for (k, c) in coords.iter_mut().enumerate() {
            let b = scales[k / 2];
            let u: f64 = rng.gen_range(-0.5..0.5);
            *c = -b * u.signum() * (1.0 - 2.0 * u.abs()).ln();
            log_proposal += -(2.0 * b).ln() - c.abs() / b;
        }
        let mut spins: Vec<SpinVector> = Vec::with_capacity(n_total);
        for v in 0..n_total {
            match pair_of[v] {
                Some(k) => spins.push(SpinVector::on_hyperboloid(
                    &alg,
                    k,
                    coords[2 * k],
                    coords[2 * k + 1],
                )),
                None => spins.push(SpinVector::boosted_zero(&alg, pinned.unwrap().1)),
            }
        }
        let energy = h22_energy(&spins, &edges);
        let mut density = energy.exp_even();
        for &v in &free {
            density = &density * &spins[v].z.apply_smooth(&recip)?;
        }
        let point = H22Point {
            alg,
            spin: spins,
            pair_of: pair_of.clone(),
        };
        let integrand = &density * &observable(&point);
        let value = integrand.berezin_all() / norm / log_proposal.exp();
        sum += value;
        sum_sq += value * value;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) / n;
    Ok((mean, var.sqrt()))
}

// ---------------------------------------------------------------------------
// Supersymmetric free field
// ---------------------------------------------------------------------------

/// Free-field measure: symmetric quadratic form over the full vertex set and
/// a pinned vertex with boost. The pinned spin is `(sinh s, 0, 0, 0)`.
pub struct FreeMeasure {
    pub form: DMatrix<f64>,
    pub bc: BoundaryCondition,
}

impl FreeMeasure {
    pub fn new(form: DMatrix<f64>, pinned: usize, boost: f64) -> Self {
        assert!(form.nrows() == form.ncols() && pinned < form.nrows());
        Self {
            form,
            bc: BoundaryCondition {
                pinned,
                boost,
            },
        }
    }
}

/// Structured free-field observable: scalar coefficient, a product of bare
/// `x_v` factors, and per-vertex smooth functions of `z_v^2`. This shape
/// admits closed-form fermionic extraction, so only the bosonic integral is
/// discretized.
pub struct FreeObservable {
    pub coeff: f64,
    pub x_factors: Vec<usize>,
    pub z2_factors: Vec<(usize, Box<dyn Smooth>)>,
}

impl FreeObservable {
    pub fn constant(c: f64) -> Self {
        Self {
            coeff: c,
            x_factors: vec![],
            z2_factors: vec![],
        }
    }

    pub fn with_x(mut self, v: usize) -> Self {
        self.x_factors.push(v);
        self
    }

    pub fn with_z2(mut self, v: usize, f: Box<dyn Smooth>) -> Self {
        self.z2_factors.push((v, f));
        self
    }
}

struct Whitening {
    /// Inverse transpose of the Cholesky factor: `x = mean + l_inv_t u`.
    l_inv_t: DMatrix<f64>,
    x_mean: nalgebra::DVector<f64>,
    det_ff: f64,
    /// `exp(-s^2 sinh^2 / 2 * schur)` boundary factor.
    boundary: f64,
    free: Vec<usize>,
}

fn whiten(measure: &FreeMeasure) -> Result<Whitening, SusyError> {
    let n = measure.form.nrows();
    let p = measure.bc.pinned;
    let free = free_vertices(n, Some(p));
    let a_ff = measure
        .form
        .select_rows(free.iter())
        .select_columns(free.iter());
    let a_fp = measure.form.select_rows(free.iter()).column(p).into_owned();
    let chol = a_ff.clone().cholesky().ok_or(SusyError::NotPositiveDefinite)?;
    let det_ff = chol.determinant();
    let sh = measure.bc.boost.sinh();
    let sol = chol.solve(&a_fp);
    let x_mean = sol.scale(-sh);
    let schur = measure.form[(p, p)] - (a_fp.transpose() * &sol)[(0, 0)];
    let boundary = (-0.5 * sh * sh * schur).exp();
    let l = chol.l();
    let l_inv_t = l
        .transpose()
        .try_inverse()
        .ok_or(SusyError::NotPositiveDefinite)?;
    Ok(Whitening {
        l_inv_t,
        x_mean,
        det_ff,
        boundary,
        free,
    })
}

/// Probabilists' Gauss–Hermite: `E_{u ~ N(0,1)}[f(u)] = sum w f(x)`.
fn prob_hermite(n: usize) -> Rule1d {
    let base = crate::quad::gauss_hermite(n);
    Rule1d {
        nodes: base.nodes.iter().map(|&x| x * std::f64::consts::SQRT_2).collect(),
        weights: base
            .weights
            .iter()
            .map(|&w| w / std::f64::consts::PI.sqrt())
            .collect(),
    }
}

fn free_sweep(measure: &FreeMeasure, obs: &FreeObservable, nodes: usize) -> Result<f64, SusyError> {
    let wh = whiten(measure)?;
    let m = wh.free.len();
    let n = measure.form.nrows();
    let p = measure.bc.pinned;
    let mut slot = vec![usize::MAX; n];
    for (k, &v) in wh.free.iter().enumerate() {
        slot[v] = k;
    }

    // Fermionic bilinear over free vertices.
    let a_ff = measure
        .form
        .select_rows(wh.free.iter())
        .select_columns(wh.free.iter());

    let rule = TensorRule::uniform(prob_hermite(nodes), 2 * m);
    let sinh_s = measure.bc.boost.sinh();
    let mut sum = 0.0;
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    rule.for_each(|u, w| {
        // first m coordinates drive x, last m drive y
        for v in 0..n {
            if v == p {
                x[v] = sinh_s;
                y[v] = 0.0;
            } else {
                x[v] = wh.x_mean[slot[v]];
                y[v] = 0.0;
            }
        }
        for k in 0..m {
            for r in 0..m {
                x[wh.free[r]] += wh.l_inv_t[(r, k)] * u[k];
                y[wh.free[r]] += wh.l_inv_t[(r, k)] * u[m + k];
            }
        }
        // per-vertex z^2 factors: value and soul coefficient
        let mut scalar = obs.coeff;
        let mut d_over_c = vec![0.0; m];
        for (v, f) in &obs.z2_factors {
            let b = 1.0 + x[*v] * x[*v] + y[*v] * y[*v];
            let c = f.deriv(0, b);
            scalar *= c;
            // c can underflow to zero at extreme nodes; the term then
            // contributes nothing, and dividing would poison the sum with NaN
            if *v != p && c != 0.0 {
                // z^2 = b + 2 xi eta exactly
                d_over_c[slot[*v]] += 2.0 * f.deriv(1, b) / c;
            }
        }
        for &v in &obs.x_factors {
            scalar *= x[v];
        }
        // int e^{-xi A eta} prod (c_v + d_v xi eta) = prod c_v det(A - diag(d/c))
        let mut a = a_ff.clone();
        for k in 0..m {
            a[(k, k)] -= d_over_c[k];
        }
        let ferm = a.lu().determinant();
        sum += w * scalar * ferm;
    });
    Ok(sum * wh.boundary / wh.det_ff)
}

/// Free-field expectation of a structured observable; fermions are extracted
/// in closed form, bosons by whitened Gauss–Hermite quadrature.
pub fn free_expectation(
    measure: &FreeMeasure,
    obs: &FreeObservable,
    spec: &QuadratureSpec,
) -> Result<f64, SusyError> {
    let coarse = free_sweep(measure, obs, spec.nodes_per_axis)?;
    if !spec.check_convergence {
        return Ok(coarse);
    }
    let fine = free_sweep(measure, obs, 2 * spec.nodes_per_axis)?;
    let moved = (fine - coarse).abs() / fine.abs().max(1.0);
    if moved > spec.tolerance {
        return Err(QuadError::NotConverged {
            moved,
            tol: spec.tolerance,
        }
        .into());
    }
    Ok(fine)
}

/// Free-field configuration for generic observables.
pub struct FreePoint {
    pub alg: GrassmannAlgebra,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `z_v^2 = 1 + x^2 + y^2 + 2 xi eta` as an even element.
    pub z2: Vec<GrassmannElement>,
    pub pair_of: Vec<Option<usize>>,
}

pub type FreeGenericObservable<'a> = &'a dyn Fn(&FreePoint) -> GrassmannElement;

/// Unpinned free-field expectation of a generic observable that carries its
/// own decay (Parisi–Sourlas style test functions). Bosons use sinh-mapped
/// quadrature since the quadratic form alone may be singular.
pub fn free_expectation_unpinned_generic(
    form: &DMatrix<f64>,
    observable: FreeGenericObservable,
    observable_decays: bool,
    decay_rates: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64, SusyError> {
    if !observable_decays {
        return Err(SusyError::NonDecayingObservable);
    }
    let n = form.nrows();
    let alg = GrassmannAlgebra::new(n);
    let eval = |nodes: usize| -> Result<f64, SusyError> {
        let axes = decay_rates
            .iter()
            .flat_map(|&r| {
                let scale = (0.6 * spec.scale / r.max(1e-12)).clamp(1e-3, 1e3);
                let rule = sinh_rule(nodes, scale, spec.stretch);
                [rule.clone(), rule]
            })
            .collect();
        let rule = TensorRule { axes };
        let norm = (2.0 * std::f64::consts::PI).powi(n as i32);
        let mut sum = 0.0;
        rule.for_each(|coords, w| {
            let x: Vec<f64> = (0..n).map(|v| coords[2 * v]).collect();
            let y: Vec<f64> = (0..n).map(|v| coords[2 * v + 1]).collect();
            // -1/2 Psi form Psi: bosonic scalar + fermionic bilinear
            let mut bos = 0.0;
            let mut ferm = alg.zero();
            for i in 0..n {
                for j in 0..n {
                    let a = form[(i, j)];
                    if a == 0.0 {
                        continue;
                    }
                    bos += -0.5 * a * (x[i] * x[j] + y[i] * y[j]);
                    ferm = &ferm + &(&alg.xi(i) * &alg.eta(j)).scale(-a);
                }
            }
            let density = (&alg.scalar(bos) + &ferm).exp_even();
            let z2: Vec<GrassmannElement> = (0..n)
                .map(|v| {
                    &alg.scalar(1.0 + x[v] * x[v] + y[v] * y[v]) + &alg.pair(v).scale(2.0)
                })
                .collect();
            let point = FreePoint {
                alg,
                x,
                y,
                z2,
                pair_of: (0..n).map(Some).collect(),
            };
            let integrand = &density * &observable(&point);
            sum += w * integrand.berezin_all() / norm;
        });
        Ok(sum)
    };
    let coarse = eval(spec.nodes_per_axis)?;
    if !spec.check_convergence {
        return Ok(coarse);
    }
    let fine = eval(2 * spec.nodes_per_axis)?;
    let moved = (fine - coarse).abs() / fine.abs().max(1.0);
    if moved > spec.tolerance {
        return Err(QuadError::NotConverged {
            moved,
            tol: spec.tolerance,
        }
        .into());
    }
    Ok(fine)
}
