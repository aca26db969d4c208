//! Generalized weak Galerkin discretization of the stationary Stokes problem
//! on triangular meshes.

#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod femspace;
pub mod mesh;
pub mod solver;
pub mod sparse;
pub mod weakops;

pub use assembly::{PressureGauge, ProblemSpec};
pub use femspace::ElementConfig;
pub use mesh::Mesh;
