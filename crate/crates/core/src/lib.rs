//! Coordinate change and blended dynamics for heterogeneous multi-agent
//! systems with rank-deficient diffusive coupling.

pub mod analysis;
pub mod apps;
pub mod blended;
pub mod cli;
pub mod decomposition;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod network;
pub mod sample;
pub mod simulate;

pub use error::{Error, Result};
