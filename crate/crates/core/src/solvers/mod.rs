//! Finite-difference time steppers for the Allen-Cahn, Fisher-KPP, heat and
//! wave equations, the tridiagonal solver behind the implicit schemes, and
//! refined-grid reference solutions.
//!
//! All state is interior-only: boundary values enter through ghost nodes and
//! are never evolved.

mod field;
mod pde;
mod reference;
mod schemes;
mod stencil;
pub mod tridiag;

pub use field::{CacheKey, SolutionCache, SolutionField};
pub use pde::{PdeKind, PdeSpec, SchemeId};
pub use reference::{
    reference_solution, refined_trajectory, restrict_space, stability_number, FineStepper, Refinement,
    MAX_CFL, MAX_DIFFUSION_NUMBER,
};
pub use schemes::{solve, Stepper, DIVERGENCE_LIMIT};
pub use stencil::{boundary_values, neumann_reconstruction, with_boundary, Laplacian};
pub use tridiag::{thomas_solve, Tridiagonal};

/// Observed convergence order from three solutions at successive refinements
/// by `ratio`: `log(|e_coarse| / |e_fine|) / log(ratio)` with `e` the
/// difference between neighbouring levels.
pub fn richardson_order(coarse_minus_medium: f64, medium_minus_fine: f64, ratio: f64) -> f64 {
    (coarse_minus_medium.abs() / medium_minus_fine.abs()).ln() / ratio.ln()
}
