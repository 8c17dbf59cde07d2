//! Zero-shot PDE continuation experiments.
//!
//! Spatiotemporal PDE solutions are produced by classical finite-difference
//! solvers, quantized to three-digit codes, serialized into comma/semicolon
//! delimited token streams and continued by a pluggable generation backend.
//! The generated streams are parsed back and scored against refined reference
//! solutions.

pub mod backend;
pub mod codec;
pub mod error;
pub mod experiments;
pub mod grid_ic;
pub mod metrics;
pub mod solvers;

pub use error::{Error, Result};
pub use grid_ic::{BoundarySpec, IcParams, IcSeed, InitialCondition, SpatialGrid, TimeGrid};
pub use solvers::{PdeKind, PdeSpec, SchemeId, SolutionField};
