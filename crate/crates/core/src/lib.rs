//! Vertex reinforced jump processes and their field-theoretic counterparts on
//! small weighted graphs.
//!
//! The crate provides, in roughly bottom-up order:
//!
//! * [`graph`] — finite weighted graphs, cemetery augmentation, Laplacians and
//!   the weighted spanning-tree determinant.
//! * [`grassmann`] — an exact finite-dimensional Grassmann algebra with
//!   Berezin integration and smooth-function calculus on even elements.
//! * [`quad`] — Gauss–Hermite / Gauss–Legendre rules, sinh-mapped rules for
//!   exponential tails, and tensor-product iteration.
//! * [`susy`] — expectations of the hyperbolic sigma field and of the
//!   supersymmetric free field, by bosonic quadrature plus exact fermionic
//!   extraction.
//! * [`environment`] — the random-environment mixing density, its quadrature
//!   oracles, and an adaptive random-walk Metropolis sampler.
//! * [`vrjp`] — exact simulation of the reinforced jump process, its time
//!   change, quenched Markov processes, and trajectory densities.
//! * [`loopsoup`] — Markov loop-soup sampling, occupation fields, and the
//!   determinant-ratio Laplace oracle.
//! * [`isomorph`] — the verification harness turning each isomorphism
//!   identity into an executable Monte-Carlo-vs-oracle check.

pub mod environment;
pub mod graph;
pub mod grassmann;
pub mod isomorph;
pub mod loopsoup;
pub mod quad;
pub mod stats;
pub mod susy;
pub mod vrjp;

pub use graph::{AugmentedGraph, GraphError, WeightedGraph};
pub use grassmann::{GrassmannAlgebra, GrassmannElement};
pub use isomorph::{Theorem, VerificationReport};
