//! Regime graphs with certified transitions, drift-based stability bounds,
//! and the witnesses that exercise them.

pub mod admissibility;
pub mod error;
pub mod linalg;
pub mod morphism;
pub mod protected;
pub mod runner;
pub mod scenario;
pub mod stability;
pub mod symbolic;
pub mod system;
pub mod witness;

pub use error::{Error, Result};
