//! Gradient-flow dynamics of point defects that may only glide along a finite
//! set of directions.
//!
//! The crate is organised around five pieces:
//!
//! * [`glide`]: the glide-direction set, its crystalline norm and dual norm,
//!   the multi-valued projection onto glide directions, and the quasi-distance
//!   that is finite only for glide-aligned displacements.
//! * [`energy`]: configurations of defects, the regularised screw-dislocation
//!   energy, benchmark energies and force fields, and a finite-difference
//!   gradient oracle.
//! * [`mms`]: the minimising-movement scheme driven by the quasi-distance,
//!   with its piecewise-constant and De Giorgi interpolants.
//! * [`inclusion`]: an explicit integrator for the limiting differential
//!   inclusion with Filippov sliding, plus the classification of ambiguity
//!   points into sources, cross-slip and fine cross-slip.
//! * [`edi`]: dissipation potentials, slopes, metric derivatives and the
//!   discrete and continuum energy-dissipation audits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod edi;
pub mod energy;
mod error;
pub mod glide;
pub mod inclusion;
pub mod mms;
mod optimize;
pub mod quadrature;
pub mod simplex;

pub use error::{Error, Result};

/// Points, velocities and forces all live in `R^d`.
pub type Vector = nalgebra::DVector<f64>;

/// Builds a [`Vector`] from a slice of coordinates.
pub fn vector(coords: &[f64]) -> Vector {
    Vector::from_column_slice(coords)
}
