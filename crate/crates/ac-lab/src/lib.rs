//! Numerical laboratory for Allen-Cahn phase transitions on warped-product domains.

pub mod error;
pub mod experiments;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod heteroclinic;
pub mod linalg;
pub mod potential;
pub mod barrier;
pub mod quad;
pub mod spectrum;
pub mod toda;

pub use error::{LabError, Result};
