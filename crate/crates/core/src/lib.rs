//! Numerical laboratory for symmetric-gradient p-Laplace systems with
//! `(p,δ)`-structure, `1 < p ≤ 2`.
//!
//! The crate covers the scalar N-function algebra ([`nfunc`]), the operator
//! `S(Du) = (δ+|Du|)^{p-2} Du` and its A-approximation ([`operator`]), a Q1
//! finite-element grid ([`grid`]), a Newton solver on the discrete convex
//! energy ([`solver`]), parameter ladders in `A` and `δ` ([`continuation`]),
//! implicit Euler for the parabolic system ([`parabolic`]) and the sampled
//! property suites run by `pdelta check` ([`certify`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation; index loops walk
// several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certify;
pub mod cli;
pub mod continuation;
pub mod error;
pub mod export;
pub mod grid;
pub mod linalg;
pub mod nfunc;
pub mod numerics;
pub mod operator;
pub mod parabolic;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{build_mesh, Diagnostics, Field, Mesh};
pub use nfunc::PDeltaParams;
pub use operator::{build_a_approx, AApprox, Variant};
pub use tensor::SymTensor;
