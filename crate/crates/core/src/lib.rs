//! Finite-truncation laboratory for the Nelson model with variable coefficients.
//!
//! The one-particle space is a periodic lattice, the boson Fock space is truncated at a
//! fixed total number, and every operator is a dense matrix. Modules:
//!
//! * [`grid`]: lattice, Fourier transforms, Sobolev norms, cutoff profiles.
//! * [`fock`]: truncated symmetric Fock space, ladders, fields, Weyl operators.
//! * [`psido`]: phase-space symbols, quantizations, Moyal product, norm estimators.
//! * [`nelson`]: model assembly, vacuum energy, Gross transformation, resolvent sweeps.
//! * [`ibc`]: the operators `G`, `T`, the factorization identity and domain trends.
//! * [`inequalities`]: rearrangement, Hardy–Littlewood, Peetre and singular integrals.
//! * [`experiments`]: the named experiments shared by the CLI and the acceptance target.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod fock;
pub mod grid;
pub mod ibc;
pub mod inequalities;
pub mod linalg;
pub mod nelson;
pub mod psido;

pub use fock::{FockBasis, FockError, Hermiticity, ModeMap, OperatorMatrix, Space};
pub use grid::{Grid, GridError, LatticeFunction, NyquistGuard, Profile};
