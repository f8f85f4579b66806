//! Numerical laboratory for degenerate mixed Robin/Dirichlet problems in the upper half space:
//! discretization, partial Dirichlet-to-Neumann maps, Runge approximation, CGO remainders and
//! Fourier reconstruction of potentials.

pub mod cgo;
pub mod discretization;
pub mod dtn;
pub mod error;
pub mod forward;
pub mod io;
pub mod linalg;
pub mod quadrature;
pub mod reconstruct;
pub mod runge;

pub use error::{Error, Result};
pub use num_complex::Complex64;
