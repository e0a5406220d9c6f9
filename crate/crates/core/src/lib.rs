//! Tensor-network simulation of the one-dimensional classical and quantum
//! contact processes: double-space TEBD of density matrices and
//! observables, quantum-jump trajectories, a dense reference integrator for
//! small chains, and power-law exponent analysis.

pub mod analysis;
pub mod doublespace;
pub mod error;
pub mod linalg;
pub mod model;
pub mod mps;
pub mod oracle;
pub mod qjmc;
pub mod scalar;

pub use error::{Error, Result};
pub use num_complex::{Complex32 as c32, Complex64 as c64};

pub type Mps64 = mps::Mps<c64>;
pub type Mps32 = mps::Mps<c32>;
pub type TwoSiteGate64 = mps::TwoSiteGate<c64>;
pub type GateSchedule64 = model::GateSchedule<c64>;
