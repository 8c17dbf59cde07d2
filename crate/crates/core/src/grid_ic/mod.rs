//! Uniform space/time grids, boundary conditions and spline-based random
//! initial conditions.
//!
//! Every value here is immutable once built and can be shared freely between
//! trial workers.

mod grid;
mod ic;
mod spline;

pub use grid::{build_grids, BoundarySpec, SpatialGrid, TimeGrid};
pub use ic::{resample_ic, sample_random_ic, IcParams, IcRecord, IcSeed, InitialCondition, Profile};
pub use spline::CubicSpline;
