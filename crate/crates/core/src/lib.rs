//! Numerical toolkit for test-function Schur–Agler classes on finite node sets.
//!
//! The crate decides interpolation/membership questions through positivity of
//! Pick-type kernels, solves discretized Agler decompositions by alternating
//! projections, and turns a decomposition into a unitary colligation whose
//! transfer function reproduces the data.
//!
//! Modules, bottom-up:
//! - [`linalg`]: Hermitian eigen-tools, PSD checks, Gram factoring, unitary completion.
//! - [`testfns`]: test functions, constrained extreme measures and their Cayley transforms.
//! - [`kernels`]: finite kernels, Pick matrices, admissibility and dual interpolation checks.
//! - [`agler`]: the decomposition solver and its separation evidence.
//! - [`realize`]: lurking-isometry realization and transfer-function evaluation.
//! - [`cli`]: JSON schemas and the `agler` command-line surface.

pub mod agler;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod realize;
pub mod testfns;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, HermitianMatrix, PsdReport};
pub use num_complex::Complex64;

use std::fmt;

/// A point of the disk (one coordinate) or of the polydisk (several).
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<Complex64>);

impl Point {
    pub fn scalar(z: Complex64) -> Self {
        Point(vec![z])
    }

    pub fn real(x: f64) -> Self {
        Point(vec![Complex64::new(x, 0.0)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.0
    }

    /// First coordinate; the disk variable.
    pub fn z(&self) -> Complex64 {
        self.0[0]
    }

    /// Largest coordinate modulus.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl From<Complex64> for Point {
    fn from(z: Complex64) -> Self {
        Point::scalar(z)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, z) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{z}")?;
        }
        write!(f, ")")
    }
}
