//! Numerical laboratory for finite-dimensional subspaces of `L_p`.
//!
//! * [`lewis`] puts a subspace `{Ax}` of `ℓ_p^m` into Lewis position and
//!   returns the induced isotropic measure on the sphere.
//! * [`measures`] evaluates the norms `‖x‖_{B_q(μ)}` of such measures.
//! * [`gaussian`] estimates Gaussian moments of those norms.
//! * [`concentration`] measures deviation tails and moment inequalities.
//! * [`embedding`] certifies random Gaussian embeddings of `ℓ_2^k` over
//!   nets of the sphere.
//!
//! Every Monte Carlo routine takes an explicit seed; see [`rng`] for the
//! stream layout and [`par`] for how work is sharded.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod embedding;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod lewis;
pub mod linalg;
pub mod measures;
pub mod par;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use measures::{coordinate_measure, DiscreteIsotropicMeasure, NormBody};
