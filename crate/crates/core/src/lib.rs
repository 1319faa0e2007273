//! Finite-rank perturbations that give bounded operators invariant
//! half-spaces, computed at a finite truncation dimension and certified by
//! checking the underlying algebraic identities as numerical residuals.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biorthogonal;
pub mod bridge;
pub mod error;
pub mod halfspace;
pub mod linalg;
pub mod operator;
pub mod perturbation;
pub mod resolvent;
pub mod scenario;
pub mod structure;
pub mod vector;

pub use error::{LabError, Result};
pub use faer::c64;
pub use operator::{OperatorRep, OperatorSpec};
pub use vector::CVector;
