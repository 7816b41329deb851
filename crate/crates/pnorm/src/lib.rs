//! Certified approximation of spectral and nuclear p-norms of matrices and
//! tensors for rational p > 2.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors, ℓp norms, mode products, unfoldings.
//! - [`power_cone`]: SOC trees for geometric means and the power cone K(p).
//! - [`conic`]: conic program container and the Clarabel adapter.
//! - [`covering`]: hitting sets of the ℓp unit sphere and their combinators.
//! - [`matrix_norms`]: SDP bounds for matrix spectral/nuclear p-norms.
//! - [`tensor_norms`]: tensor algorithms built on the matrix programs.
//! - [`bench`]: the experiment runner behind `pnorm bench run`.

// Links the system OpenBLAS used by the solver's PSD cone.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate openblas_src;

pub mod bench;
pub mod conic;
pub mod covering;
pub mod error;
pub mod matrix_norms;
pub mod power_cone;
pub mod tensor;
pub mod tensor_norms;

pub use error::{Error, Result};
