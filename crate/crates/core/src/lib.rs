//! Numerics for the ultrahyperbolic Schrödinger equation
//! `i∂ₜu + Δ_y u − Δₓ u − p u = f R` on `D × G × (−T, T)`.
//!
//! The crate covers the whole computational chain: tensor grids and
//! finite-difference stencils ([`lattice`], [`grid`]), the Carleman weight
//! `φ = e^{γψ}` with its geometric certification ([`weight`]), the
//! differential operators and their Carleman conjugates ([`ops`]), a
//! Crank–Nicolson time integrator ([`evolve`]), numerical evaluation of the
//! weighted Carleman inequality ([`carleman`]) and the inverse-source
//! pipeline with Hölder-stability experiments ([`inverse`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the `uhslab` companion crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod carleman;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod inverse;
pub mod lattice;
mod linalg;
pub mod ops;
pub mod weight;

mod prelude;

pub use error::{Error, Result};
pub use grid::{AxisGroup, ComplexField, Face, FaceTrace, GridSpec, SpatialField};
pub use lattice::{Lattice, Region};
pub use num_complex::Complex64;
pub use weight::WeightParams;
