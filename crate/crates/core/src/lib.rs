//! Performance estimation problems for block coordinate descent.
//!
//! Points, gradients and function values generated by a first-order block
//! method are expressed symbolically over per-block Gram bases ([`expr`]),
//! constrained by block-smooth convex interpolation conditions ([`interp`]),
//! generated by symbolic executors ([`algos`]), lifted to a semidefinite
//! program and solved ([`pep`]), and post-processed into bounds, comparisons
//! and checks ([`analysis`]).

pub mod algos;
pub mod analysis;
pub mod error;
pub mod expr;
pub mod interp;
pub mod par;
pub mod pep;

pub use error::{PepError, Result};
