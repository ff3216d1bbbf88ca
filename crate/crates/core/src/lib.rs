//! Information-capacity bookkeeping for finitely fine-grained quantum states:
//! log-space magnitudes, quantized Hilbert spaces, resource and stability
//! checks, open-system dynamics, measurement chains and order-of-magnitude
//! estimators.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod hilbert;
pub mod linalg;
pub mod magnitude;
pub mod measurement;
pub mod resources;

pub use error::{Error, Result};
