//! Completely positive trace-preserving time integration of Lindblad master
//! equations on truncated bosonic Fock spaces.
//!
//! The crate provides dense complex linear algebra ([`matcore`]), Fock-space
//! operators and states ([`fock`]), Lindblad models ([`lindblad`]), the time
//! steppers ([`schemes`]), an adaptive reference integrator ([`reference`]),
//! error and stability analysis ([`analysis`]) and a benchmark runner
//! ([`cli`]).

// Negated float comparisons are used deliberately so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod fock;
pub mod lindblad;
pub mod matcore;
pub mod reference;
pub mod schemes;

pub use error::{Error, Result};
pub use lindblad::{build_model, DensityMatrix, LindbladModel};
pub use matcore::{CMatrix, C64};
pub use schemes::{integrate, SchemeTag, Stepper};
