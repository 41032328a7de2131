//! Monte Carlo model and estimators for heralded entanglement between two
//! spin waves stored in one cold-atom memory.
//!
//! Qubit convention for two-qubit states: basis index `2·q0 + q1`, qubit 0 is
//! the low-lying spin wave (signal-2 photon) and qubit 1 the high-lying spin
//! wave (signal-1 photon). Logical 0 is H, logical 1 is V.

pub mod analysis;
pub mod detection;
pub mod error;
pub mod memory;
pub mod qcore;
pub mod rng;
pub mod source;
pub mod tomography;

pub use error::{Error, Result};
