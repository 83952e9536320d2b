//! One-dimensional quadrature rules (Gauss–Hermite, Gauss–Legendre, and a
//! sinh-mapped rule for integrands with exponential tails) plus tensor-product
//! iteration and a node-doubling convergence check.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: doubling nodes moved the value by {moved:e} (tolerance {tol:e})")]
    NotConverged { moved: f64, tol: f64 },
}

/// Nodes and weights of a one-dimensional rule; approximates
/// `int f = sum w_k f(x_k)` over the rule's natural domain.
#[derive(Debug, Clone)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Golub–Welsch: nodes are eigenvalues of the Jacobi matrix, weights are
/// `mu0 * v0^2` from the first eigenvector components.
fn golub_welsch(offdiag: &[f64], mu0: f64) -> Rule1d {
    let n = offdiag.len() + 1;
    let mut j = DMatrix::zeros(n, n);
    for (k, &b) in offdiag.iter().enumerate() {
        j[(k, k + 1)] = b;
        j[(k + 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Rule1d {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Hermite rule for `int f(x) e^{-x^2} dx`.
pub fn gauss_hermite(n: usize) -> Rule1d {
    let offdiag: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    golub_welsch(&offdiag, std::f64::consts::PI.sqrt())
}

/// Gauss–Hermite rule rewritten for plain Lebesgue integration of functions
/// with Gaussian decay of scale `sigma`: `int f(x) dx = sum w_k f(x_k)`.
pub fn hermite_lebesgue(n: usize, sigma: f64) -> Rule1d {
    let base = gauss_hermite(n);
    let s = sigma * std::f64::consts::SQRT_2;
    Rule1d {
        nodes: base.nodes.iter().map(|&x| s * x).collect(),
        weights: base
            .nodes
            .iter()
            .zip(&base.weights)
            .map(|(&x, &w)| s * w * (x * x).exp())
            .collect(),
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule1d {
    let offdiag: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&offdiag, 2.0)
}

/// Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule1d {
    let base = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Rule1d {
        nodes: base.nodes.iter().map(|&t| mid + half * t).collect(),
        weights: base.weights.iter().map(|&w| half * w).collect(),
    }
}

/// Rule over the whole line for integrands with exponential (not Gaussian)
/// tails: Gauss–Legendre composed with `x = scale * sinh(stretch * t)`.
///
/// The map crowds nodes near the origin and reaches out to roughly
/// `scale * e^{stretch} / 2`, where the doubly-exponential damping of the
/// transformed integrand makes the remainder negligible.
pub fn sinh_rule(n: usize, scale: f64, stretch: f64) -> Rule1d {
    let base = gauss_legendre(n);
    Rule1d {
        nodes: base
            .nodes
            .iter()
            .map(|&t| scale * (stretch * t).sinh())
            .collect(),
        weights: base
            .nodes
            .iter()
            .zip(&base.weights)
            .map(|(&t, &w)| w * scale * stretch * (stretch * t).cosh())
            .collect(),
    }
}

/// Tensor product of one-dimensional rules.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub axes: Vec<Rule1d>,
}

impl TensorRule {
    pub fn uniform(rule: Rule1d, dim: usize) -> Self {
        Self {
            axes: vec![rule; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(Rule1d::len).product()
    }

    /// Visit every node in lexicographic order with its product weight.
    pub fn for_each(&self, mut f: impl FnMut(&[f64], f64)) {
        let dim = self.dim();
        if dim == 0 {
            f(&[], 1.0);
            return;
        }
        let mut idx = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        loop {
            let mut w = 1.0;
            for d in 0..dim {
                point[d] = self.axes[d].nodes[idx[d]];
                w *= self.axes[d].weights[idx[d]];
            }
            f(&point, w);
            let mut d = dim;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut sum = 0.0;
        self.for_each(|x, w| sum += w * f(x));
        sum
    }
}

/// How bosonic integrals are discretized and certified.
#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    /// Nodes per axis at base resolution.
    pub nodes_per_axis: usize,
    /// Scale parameter fed to the 1d rule (Gaussian sigma, or sinh scale).
    pub scale: f64,
    /// Stretch of the sinh map; ignored by Gaussian rules.
    pub stretch: f64,
    /// When set, results are reported only after a node-doubling run moves
    /// the value by less than `tolerance`.
    pub check_convergence: bool,
    /// Convergence tolerance for the doubling test.
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_axis: 32,
            scale: 1.0,
            stretch: 5.0,
            check_convergence: false,
            tolerance: 1e-6,
        }
    }
}

impl QuadratureSpec {
    pub fn with_nodes(mut self, n: usize) -> Self {
        self.nodes_per_axis = n.max(8);
        self
    }

    pub fn converged(mut self, tol: f64) -> Self {
        self.check_convergence = true;
        self.tolerance = tol;
        self
    }

    /// Run `eval` at base and doubled resolution when a certificate is
    /// requested; returns the finer value.
    pub fn certify(&self, mut eval: impl FnMut(usize) -> f64) -> Result<f64, QuadError> {
        let coarse = eval(self.nodes_per_axis);
        if !self.check_convergence {
            return Ok(coarse);
        }
        let fine = eval(2 * self.nodes_per_axis);
        let moved = (fine - coarse).abs() / fine.abs().max(1.0);
        if moved > self.tolerance {
            return Err(QuadError::NotConverged {
                moved,
                tol: self.tolerance,
            });
        }
        Ok(fine)
    }
}
