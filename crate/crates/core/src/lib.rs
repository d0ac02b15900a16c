//! Canonical polyadic (CP) decomposition of dense third-order tensors.
//!
//! The crate is organised around the reduced least-squares functional in which
//! the first factor matrix is eliminated in closed form:
//!
//! - [`tensor`]: dense value types, Khatri-Rao products, unfoldings and mode contractions.
//! - [`spectra`]: symmetric eigendecomposition, SVD, pseudo-inverse and numerical rank.
//! - [`reduced`]: the Gramian, eliminated factor, contraction kernel and the three
//!   independent evaluations of the reduced functional.
//! - [`centroid`]: Eckart-Young lower bound, centroid matrix, upper bound, gap
//!   certificate and the centroid projection initializer.
//! - [`solvers`]: ALS, regularized ALS and line-search ALS with trace recording.
//! - [`diagnostics`]: swamp metrics and rank-one critical point tooling.

pub mod centroid;
pub mod diagnostics;
pub mod error;
pub mod reduced;
pub mod solvers;
pub mod spectra;
pub mod tensor;

pub use error::{CpError, Result};
pub use tensor::{FactorSet, Mat, Mode, Tensor3};
