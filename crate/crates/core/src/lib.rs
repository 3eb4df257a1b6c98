//! Dyadic Haar systems in `R^d`, their perturbations by near-identity affine
//! maps and by mollifier convolution, and finite-family frame diagnostics.
//!
//! The crate is organized bottom-up:
//!
//! - [`dyadic`]: dyadic cubes and the tensor-product Haar system.
//! - [`affine`]: small dense matrices in the max-row-sum norm, pivot-free LU,
//!   the elbow-shaped telescoping interpolants, and affine perturbation maps.
//! - [`gridfn`]: piecewise-constant functions on a uniform dyadic mesh with
//!   perturbation, mollification, inner products and total variation.
//! - [`frames`]: sparse Gram assembly, Bessel bounds via power iteration, the
//!   Schur diagnostic, analysis/synthesis, and dyadic-average square functions.

pub mod affine;
pub mod dyadic;
mod error;
pub mod frames;
pub mod gridfn;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;
