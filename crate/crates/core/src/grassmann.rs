//! Exact finite-dimensional Grassmann algebra over generator pairs
//! `(xi_i, eta_i)`, with Berezin integration and smooth-function calculus on
//! even elements.
//!
//! Generators are ordered `xi_0, eta_0, xi_1, eta_1, ...`; a basis monomial is
//! a subset of generators written in that canonical order and stored as a
//! bitmask. Coefficients are plain `f64`.
//!
//! The Berezin convention is pinned by the determinant identity
//! `int e^{-xi A eta} dxi deta = det A`: pair integration is the composition
//! of left derivatives `d_xi . d_eta`, so `int xi_i eta_i dxi_i deta_i = -1`.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrassmannError {
    #[error("elements live in different generator universes ({0} vs {1} pairs)")]
    UniverseMismatch(usize, usize),
    #[error("repeated pair {0} in Berezin integration")]
    RepeatedPair(usize),
    #[error("smooth function body {0} outside domain")]
    BodyOutOfDomain(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Generator universe: `pairs` pairs, `2 * pairs` generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrassmannAlgebra {
    pairs: usize,
}

impl GrassmannAlgebra {
    pub fn new(pairs: usize) -> Self {
        assert!(pairs <= 8, "algebra dimension 4^{pairs} is too large");
        Self { pairs }
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    fn dim(&self) -> usize {
        1usize << (2 * self.pairs)
    }

    pub fn zero(&self) -> GrassmannElement {
        GrassmannElement {
            pairs: self.pairs,
            coeffs: vec![0.0; self.dim()],
        }
    }

    pub fn scalar(&self, c: f64) -> GrassmannElement {
        let mut e = self.zero();
        e.coeffs[0] = c;
        e
    }

    pub fn one(&self) -> GrassmannElement {
        self.scalar(1.0)
    }

    /// The generator `xi_i`.
    pub fn xi(&self, i: usize) -> GrassmannElement {
        assert!(i < self.pairs);
        let mut e = self.zero();
        e.coeffs[1 << (2 * i)] = 1.0;
        e
    }

    /// The generator `eta_i`.
    pub fn eta(&self, i: usize) -> GrassmannElement {
        assert!(i < self.pairs);
        let mut e = self.zero();
        e.coeffs[1 << (2 * i + 1)] = 1.0;
        e
    }

    /// The even monomial `xi_i eta_i`.
    pub fn pair(&self, i: usize) -> GrassmannElement {
        assert!(i < self.pairs);
        let mut e = self.zero();
        e.coeffs[(1 << (2 * i)) | (1 << (2 * i + 1))] = 1.0;
        e
    }

    /// `exp(-xi A eta)` for an `n x n` matrix over the first `n` pairs.
    pub fn exp_bilinear(&self, a: &DMatrix<f64>) -> GrassmannElement {
        let n = a.nrows();
        assert!(n == a.ncols() && n <= self.pairs);
        let mut quad = self.zero();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    quad = &quad + &(&self.xi(i) * &self.eta(j)).scale(-a[(i, j)]);
                }
            }
        }
        quad.exp_even()
    }
}

/// An element of the Grassmann algebra: dense coefficient table indexed by
/// generator bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannElement {
    pairs: usize,
    coeffs: Vec<f64>,
}

/// Sign of merging canonical monomials `e_a * e_b` for disjoint masks:
/// parity of the number of generator pairs (g in a, g' in b) with g > g'.
fn merge_sign(a: usize, b: usize) -> f64 {
    let mut swaps = 0u32;
    let mut bb = b;
    while bb != 0 {
        let g = bb.trailing_zeros();
        swaps += (a >> (g + 1)).count_ones();
        bb &= bb - 1;
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl GrassmannElement {
    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn algebra(&self) -> GrassmannAlgebra {
        GrassmannAlgebra::new(self.pairs)
    }

    pub fn coeff(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    /// Degree-0 coefficient.
    pub fn body(&self) -> f64 {
        self.coeffs[0]
    }

    /// The element minus its body; nilpotent for even elements.
    pub fn soul(&self) -> GrassmannElement {
        let mut s = self.clone();
        s.coeffs[0] = 0.0;
        s
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn is_even(&self) -> bool {
        self.coeffs
            .iter()
            .enumerate()
            .all(|(m, &c)| c == 0.0 || m.count_ones() % 2 == 0)
    }

    pub fn scale(&self, s: f64) -> GrassmannElement {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= s;
        }
        out
    }

    pub fn checked_mul(&self, rhs: &GrassmannElement) -> Result<GrassmannElement, GrassmannError> {
        if self.pairs != rhs.pairs {
            return Err(GrassmannError::UniverseMismatch(self.pairs, rhs.pairs));
        }
        let mut out = GrassmannElement {
            pairs: self.pairs,
            coeffs: vec![0.0; self.coeffs.len()],
        };
        for (ma, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for (mb, &cb) in rhs.coeffs.iter().enumerate() {
                if cb == 0.0 || ma & mb != 0 {
                    continue;
                }
                out.coeffs[ma | mb] += ca * cb * merge_sign(ma, mb);
            }
        }
        Ok(out)
    }

    /// Left derivative with respect to generator `g` (bit index).
    fn derivative(&self, g: usize) -> GrassmannElement {
        let bit = 1usize << g;
        let mut out = GrassmannElement {
            pairs: self.pairs,
            coeffs: vec![0.0; self.coeffs.len()],
        };
        for (m, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 || m & bit == 0 {
                continue;
            }
            let below = (m & (bit - 1)).count_ones();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            out.coeffs[m & !bit] += sign * c;
        }
        out
    }

    /// Berezin integration over one pair: `d_xi . d_eta`.
    pub fn berezin_pair(&self, i: usize) -> GrassmannElement {
        assert!(i < self.pairs);
        self.derivative(2 * i + 1).derivative(2 * i)
    }

    /// Berezin integration over an ordered list of pairs.
    pub fn berezin(&self, pairs: &[usize]) -> Result<GrassmannElement, GrassmannError> {
        let mut seen = 0usize;
        let mut out = self.clone();
        for &i in pairs {
            if seen & (1 << i) != 0 {
                return Err(GrassmannError::RepeatedPair(i));
            }
            seen |= 1 << i;
            out = out.berezin_pair(i);
        }
        Ok(out)
    }

    /// Berezin integration over every pair; the result is a scalar.
    pub fn berezin_all(&self) -> f64 {
        let mut out = self.clone();
        for i in 0..self.pairs {
            out = out.berezin_pair(i);
        }
        out.body()
    }

    /// `exp` of an even element: `e^{body} * sum soul^k / k!`.
    pub fn exp_even(&self) -> GrassmannElement {
        debug_assert!(self.is_even());
        let alg = self.algebra();
        let soul = self.soul();
        let mut sum = alg.one();
        let mut term = alg.one();
        for k in 1..=self.pairs {
            term = (&term * &soul).scale(1.0 / k as f64);
            if term.is_zero() {
                break;
            }
            sum = &sum + &term;
        }
        sum.scale(self.body().exp())
    }

    /// Apply a smooth scalar function to an even element by nilpotent Taylor
    /// expansion: `f(body + soul) = sum_k f^(k)(body) soul^k / k!`.
    pub fn apply_smooth(&self, f: &dyn Smooth) -> Result<GrassmannElement, GrassmannError> {
        debug_assert!(self.is_even());
        let body = self.body();
        if !f.in_domain(body) {
            return Err(GrassmannError::BodyOutOfDomain(body));
        }
        let alg = self.algebra();
        let soul = self.soul();
        let mut out = alg.scalar(f.deriv(0, body));
        let mut power = alg.one();
        let mut factorial = 1.0;
        for k in 1..=self.pairs {
            power = &power * &soul;
            if power.is_zero() {
                break;
            }
            factorial *= k as f64;
            out = &out + &power.scale(f.deriv(k, body) / factorial);
        }
        Ok(out)
    }
}

impl std::ops::Add for &GrassmannElement {
    type Output = GrassmannElement;
    fn add(self, rhs: &GrassmannElement) -> GrassmannElement {
        assert_eq!(self.pairs, rhs.pairs);
        let mut out = self.clone();
        for (c, &r) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *c += r;
        }
        out
    }
}

impl std::ops::Sub for &GrassmannElement {
    type Output = GrassmannElement;
    fn sub(self, rhs: &GrassmannElement) -> GrassmannElement {
        assert_eq!(self.pairs, rhs.pairs);
        let mut out = self.clone();
        for (c, &r) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *c -= r;
        }
        out
    }
}

impl std::ops::Mul for &GrassmannElement {
    type Output = GrassmannElement;
    fn mul(self, rhs: &GrassmannElement) -> GrassmannElement {
        self.checked_mul(rhs).expect("universe mismatch")
    }
}

/// Even element split into scalar body and nilpotent soul.
#[derive(Debug, Clone)]
pub struct SuperNumber {
    body: f64,
    soul: GrassmannElement,
}

impl SuperNumber {
    pub fn from_element(e: &GrassmannElement) -> Self {
        debug_assert!(e.is_even());
        Self {
            body: e.body(),
            soul: e.soul(),
        }
    }

    pub fn body(&self) -> f64 {
        self.body
    }

    pub fn soul(&self) -> &GrassmannElement {
        &self.soul
    }

    pub fn element(&self) -> GrassmannElement {
        &self.soul.algebra().scalar(self.body) + &self.soul
    }
}

/// Scalar function with derivatives of all needed orders.
pub trait Smooth {
    /// `order`-th derivative at `x`; order 0 is the value.
    fn deriv(&self, order: usize, x: f64) -> f64;

    fn in_domain(&self, _x: f64) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Truncated Taylor jets: composite derivatives without hand chain rules.
// ---------------------------------------------------------------------------

/// Truncated Taylor series around a point; coefficient `c[k]` is
/// `f^(k)/k!`. Arithmetic propagates derivatives exactly through products,
/// quotients, `exp`, `sqrt` and powers.
#[derive(Debug, Clone)]
pub struct Jet {
    c: Vec<f64>,
}

impl Jet {
    pub fn variable(x: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = x;
        if order >= 1 {
            c[1] = 1.0;
        }
        Self { c }
    }

    pub fn constant(x: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = x;
        Self { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `k`-th derivative represented by this jet.
    pub fn deriv(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 1..=k {
            fact *= i as f64;
        }
        self.c[k] * fact
    }

    pub fn add(&self, rhs: &Jet) -> Jet {
        let mut c = self.c.clone();
        for (a, b) in c.iter_mut().zip(&rhs.c) {
            *a += b;
        }
        Jet { c }
    }

    pub fn sub(&self, rhs: &Jet) -> Jet {
        let mut c = self.c.clone();
        for (a, b) in c.iter_mut().zip(&rhs.c) {
            *a -= b;
        }
        Jet { c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            c: self.c.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn shift(&self, s: f64) -> Jet {
        let mut c = self.c.clone();
        c[0] += s;
        Jet { c }
    }

    pub fn mul(&self, rhs: &Jet) -> Jet {
        let m = self.order();
        let mut c = vec![0.0; m + 1];
        for i in 0..=m {
            for j in 0..=m - i {
                c[i + j] += self.c[i] * rhs.c[j];
            }
        }
        Jet { c }
    }

    /// Composition with a univariate analytic map given its Taylor
    /// coefficients `g[k] = g^(k)(self.value) / k!`.
    fn compose(&self, g: &[f64]) -> Jet {
        let m = self.order();
        let mut dx = self.c.clone();
        dx[0] = 0.0;
        let dx = Jet { c: dx };
        let mut out = Jet::constant(g[0], m);
        let mut power = Jet::constant(1.0, m);
        for (k, &gk) in g.iter().enumerate().skip(1) {
            if k > m {
                break;
            }
            power = power.mul(&dx);
            out = out.add(&power.scale(gk));
        }
        out
    }

    pub fn exp(&self) -> Jet {
        let m = self.order();
        let e = self.value().exp();
        let mut g = vec![0.0; m + 1];
        let mut fact = 1.0;
        for (k, gk) in g.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *gk = e / fact;
        }
        self.compose(&g)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Jet {
        self.powf(-1.0)
    }

    /// `x^p` for real `p`; the jet value must be positive unless `p` is a
    /// nonnegative integer.
    pub fn powf(&self, p: f64) -> Jet {
        let m = self.order();
        let x = self.value();
        let mut g = vec![0.0; m + 1];
        let mut falling = 1.0;
        let mut fact = 1.0;
        for k in 0..=m {
            if k > 0 {
                falling *= p - (k - 1) as f64;
                fact *= k as f64;
            }
            g[k] = falling * x.powf(p - k as f64) / fact;
        }
        self.compose(&g)
    }
}

/// Smooth function defined by a jet-valued closure, e.g.
/// `JetFn::new(|w| w.sqrt().scale(-1.0).shift(1.0).exp())` for
/// `exp(1 - sqrt(w))`.
pub struct JetFn<F: Fn(Jet) -> Jet> {
    f: F,
    domain: Option<fn(f64) -> bool>,
}

impl<F: Fn(Jet) -> Jet> JetFn<F> {
    pub fn new(f: F) -> Self {
        Self { f, domain: None }
    }

    pub fn with_domain(f: F, domain: fn(f64) -> bool) -> Self {
        Self {
            f,
            domain: Some(domain),
        }
    }
}

impl<F: Fn(Jet) -> Jet> Smooth for JetFn<F> {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        (self.f)(Jet::variable(x, order)).deriv(order)
    }

    fn in_domain(&self, x: f64) -> bool {
        self.domain.map_or(true, |d| d(x))
    }
}

/// `f(w) = exp(rate * (w - shift))`.
pub struct ExpAffine {
    pub rate: f64,
    pub shift: f64,
}

impl Smooth for ExpAffine {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        self.rate.powi(order as i32) * (self.rate * (x - self.shift)).exp()
    }
}

/// `f(w) = sqrt(w)`.
pub struct SqrtFn;

impl Smooth for SqrtFn {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        let mut falling = 1.0;
        for k in 0..order {
            falling *= 0.5 - k as f64;
        }
        falling * x.powf(0.5 - order as f64)
    }

    fn in_domain(&self, x: f64) -> bool {
        x > 0.0
    }
}

/// `f(w) = 1 / w`.
pub struct RecipFn;

impl Smooth for RecipFn {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        let mut fact = 1.0;
        for k in 1..=order {
            fact *= k as f64;
        }
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        sign * fact * x.powi(-(order as i32) - 1)
    }

    fn in_domain(&self, x: f64) -> bool {
        x != 0.0
    }
}

/// `f(w) = w`.
pub struct IdentityFn;

impl Smooth for IdentityFn {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        match order {
            0 => x,
            1 => 1.0,
            _ => 0.0,
        }
    }
}

/// Multilinear expansion over single-pair souls: given souls `s_1..s_m` with
/// `s_i^2 = 0`, builds `sum_S d(S) prod_{i in S} s_i` where `d(S)` is the
/// mixed partial derivative of the target function over the subset `S`
/// (subset passed as a bitmask).
pub fn expand_multilinear(
    alg: &GrassmannAlgebra,
    souls: &[GrassmannElement],
    derivs: impl Fn(usize) -> f64,
) -> GrassmannElement {
    let m = souls.len();
    let mut out = alg.zero();
    for subset in 0..(1usize << m) {
        let d = derivs(subset);
        if d == 0.0 {
            continue;
        }
        let mut term = alg.scalar(d);
        for (i, s) in souls.iter().enumerate() {
            if subset & (1 << i) != 0 {
                term = &term * s;
            }
        }
        out = &out + &term;
    }
    out
}

/// Closed-form Gaussian normalization `int e^{-y A y / 2} prod dy_i / sqrt(2 pi)
/// = det(A)^{-1/2}` for symmetric positive-definite `A`.
pub fn gaussian_boson_integral(a: &DMatrix<f64>) -> Result<f64, GrassmannError> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or(GrassmannError::NotPositiveDefinite)?;
    Ok(1.0 / chol.determinant().sqrt())
}
