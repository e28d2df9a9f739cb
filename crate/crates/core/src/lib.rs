//! Numerical toolkit for sparse off-diagonal Jacobi matrices.
//!
//! The crate covers the coupling model, transfer matrices and Prüfer
//! variables, absolutely continuous approximants of the spectral measure,
//! Fourier decay and van der Corput kernels, Taylor-jet derivative
//! certificates, and Kronecker sums of two copies of the operator.

pub mod error;
pub mod fourier_decay;
pub mod gevrey_calculus;
pub mod jet;
pub mod kronecker_sum;
pub mod phase;
pub mod prufer_transfer;
pub mod quadrature;
pub mod sparse_model;
pub mod spectral_measure;

pub use error::{Error, ErrorClass, Result};
