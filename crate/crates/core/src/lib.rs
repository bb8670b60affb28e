//! Growing couplings of self-similar Markov trees.
//!
//! The crate provides a catalog of splitting measures and characteristic
//! quadruplets, growing families and their generators, the critical
//! self-similarity exponent, coupled simulation of decoration-reproduction
//! processes, nested decorated trees and a transport-equation solver on the
//! two-dimensional simplex.

// Negated comparisons reject NaN inputs along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divfield;
pub mod error;
pub mod generator;
pub mod growing;
pub mod measures;
pub mod numerics;
pub mod sequence;
pub mod simulate;
pub mod svg;
pub mod tree;

pub use error::{Error, Result};
