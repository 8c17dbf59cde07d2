//! Refined-grid reference solutions restricted to an experiment grid.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::field::SolutionField;
use super::pde::PdeSpec;
use super::schemes::Stepper;
use super::stencil::{boundary_values, Laplacian};
use crate::error::{Error, Result};
use crate::grid_ic::{BoundarySpec, CubicSpline, Profile, SpatialGrid, TimeGrid};

/// Largest diffusion number `kappa dt / dx^2` accepted for explicit references.
pub const MAX_DIFFUSION_NUMBER: f64 = 0.25;
/// Largest Courant number `c dt / dx` accepted for explicit wave references.
pub const MAX_CFL: f64 = 0.5;

/// Sub-intervals per coarse interval in space and in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Refinement {
    pub x: usize,
    /// Starting time refinement; raised to the next power of two until the
    /// explicit reference is stable when `auto_t` is set.
    pub t: usize,
    #[serde(default = "default_true")]
    pub auto_t: bool,
}

fn default_true() -> bool {
    true
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            x: 8,
            t: 64,
            auto_t: true,
        }
    }
}

impl Refinement {
    pub fn fixed(x: usize, t: usize) -> Self {
        Self { x, t, auto_t: false }
    }

    /// Concrete `(refine_x, refine_t)` for a coarse discretization.
    pub fn resolve(&self, pde: &PdeSpec, spatial: &SpatialGrid, time: &TimeGrid) -> Result<(usize, usize)> {
        if self.x == 0 || self.t == 0 {
            return Err(Error::invalid("refinement factors must be positive"));
        }
        if !self.auto_t {
            return Ok((self.x, self.t));
        }
        let mut t = self.t;
        while stability_number(pde, spatial, time, self.x, t) > stability_limit(pde) {
            t = if t.is_power_of_two() { t * 2 } else { t.next_power_of_two() };
            if t > 1 << 24 {
                return Err(Error::UnstableRefinement("no stable time refinement below 2^24".into()));
            }
        }
        Ok((self.x, t))
    }
}

fn stability_limit(pde: &PdeSpec) -> f64 {
    if pde.is_second_order_in_time() {
        MAX_CFL
    } else {
        MAX_DIFFUSION_NUMBER
    }
}

/// Diffusion number (first-order equations) or Courant number (wave) of the
/// refined explicit grid.
pub fn stability_number(pde: &PdeSpec, spatial: &SpatialGrid, time: &TimeGrid, refine_x: usize, refine_t: usize) -> f64 {
    let dx = spatial.dx() / refine_x as f64;
    let dt = time.dt() / refine_t as f64;
    if pde.is_second_order_in_time() {
        pde.diffusivity().sqrt() * dt / dx
    } else {
        pde.diffusivity() * dt / (dx * dx)
    }
}

fn check_stability(pde: &PdeSpec, spatial: &SpatialGrid, time: &TimeGrid, rx: usize, rt: usize) -> Result<()> {
    let number = stability_number(pde, spatial, time, rx, rt);
    let limit = stability_limit(pde);
    if number > limit {
        let needed = Refinement { x: rx, t: rt, auto_t: true }.resolve(pde, spatial, time)?.1;
        let what = if pde.is_second_order_in_time() { "CFL number" } else { "diffusion number" };
        return Err(Error::UnstableRefinement(format!(
            "{what} {number:.4} exceeds {limit} at refine_x = {rx}, refine_t = {rt}; use refine_t >= {needed}"
        )));
    }
    Ok(())
}

/// Explicit solve on the refined grid, kept at fine spatial resolution but only
/// at the coarse time levels.
pub fn refined_trajectory(
    pde: &PdeSpec,
    initial: &dyn Profile,
    spatial: &SpatialGrid,
    time: &TimeGrid,
    refine_x: usize,
    refine_t: usize,
) -> Result<SolutionField> {
    check_stability(pde, spatial, time, refine_x, refine_t)?;
    let fine_x = spatial.refined(refine_x)?;
    let fine_t = time.refined(refine_t)?;
    let stepper = Stepper::new(*pde, pde.reference_scheme(), fine_x.n_interior(), fine_x.dx(), fine_t.dt())?;
    let ic = initial.sample_interior(&fine_x);

    let mut values = Array2::zeros((fine_x.n_interior(), time.n_steps() + 1));
    stepper.march(&ic, None, fine_t.n_steps(), |j, col| {
        if j % refine_t == 0 {
            values
                .column_mut(j / refine_t)
                .iter_mut()
                .zip(col)
                .for_each(|(d, s)| *d = *s);
        }
    })?;
    SolutionField::new(values, fine_x, time.clone(), *pde)
}

/// Keeps every `refine_x`-th spatial node of a refined field.
pub fn restrict_space(fine: &SolutionField, coarse: &SpatialGrid, refine_x: usize) -> Result<SolutionField> {
    if fine.spatial().n_interior() + 1 != refine_x * (coarse.n_interior() + 1) {
        return Err(Error::ShapeMismatch("refined grid does not nest the coarse grid".into()));
    }
    let cols = fine.time().n_steps() + 1;
    let values = Array2::from_shape_fn((coarse.n_interior(), cols), |(i, j)| {
        fine.values()[[(i + 1) * refine_x - 1, j]]
    });
    SolutionField::new(values, coarse.clone(), fine.time().clone(), *fine.pde())
}

/// Reference solution: explicit solve on the refined grid restricted to the
/// coarse space-time nodes by exact node coincidence.
pub fn reference_solution(
    pde: &PdeSpec,
    initial: &dyn Profile,
    spatial: &SpatialGrid,
    time: &TimeGrid,
    refine_x: usize,
    refine_t: usize,
) -> Result<SolutionField> {
    let fine = refined_trajectory(pde, initial, spatial, time, refine_x, refine_t)?;
    restrict_space(&fine, spatial, refine_x)
}

/// Advances a coarse slice by one coarse step using the refined explicit
/// solver. The slice is lifted to the fine grid by a not-a-knot spline through
/// the coarse nodes (boundary nodes included).
#[derive(Debug, Clone)]
pub struct FineStepper {
    pde: PdeSpec,
    coarse: SpatialGrid,
    fine: SpatialGrid,
    dt: f64,
    refine_x: usize,
    refine_t: usize,
    stepper: Stepper,
}

impl FineStepper {
    pub fn new(pde: &PdeSpec, coarse: &SpatialGrid, time: &TimeGrid, refinement: Refinement) -> Result<Self> {
        let (rx, rt) = refinement.resolve(pde, coarse, time)?;
        check_stability(pde, coarse, time, rx, rt)?;
        let fine = coarse.refined(rx)?;
        let fine_dt = time.dt() / rt as f64;
        let stepper = Stepper::new(*pde, pde.reference_scheme(), fine.n_interior(), fine.dx(), fine_dt)?;
        Ok(Self {
            pde: *pde,
            coarse: coarse.clone(),
            fine,
            dt: time.dt(),
            refine_x: rx,
            refine_t: rt,
            stepper,
        })
    }

    pub fn refinement(&self) -> (usize, usize) {
        (self.refine_x, self.refine_t)
    }

    fn lift(&self, interior: &[f64], bc: BoundarySpec) -> Result<Vec<f64>> {
        let (l, r) = boundary_values(interior, bc);
        let mut full = Vec::with_capacity(interior.len() + 2);
        full.push(l);
        full.extend_from_slice(interior);
        full.push(r);
        let spline = CubicSpline::not_a_knot(&self.coarse.points(), &full)?;
        self.fine.interior_points().into_iter().map(|x| spline.eval(x)).collect()
    }

    /// Next coarse slice from the current one. Wave problems also use the
    /// previous slice, if any, to estimate the velocity; without it the
    /// velocity is taken to be zero.
    pub fn step(&self, previous: Option<&[f64]>, current: &[f64]) -> Result<Vec<f64>> {
        self.advance(previous, current, 1)
    }

    /// Slice `levels` coarse steps after `current`, marched on the fine grid
    /// without intermediate restriction.
    pub fn advance(&self, previous: Option<&[f64]>, current: &[f64], levels: usize) -> Result<Vec<f64>> {
        let n = self.coarse.n_interior();
        if current.len() != n || previous.is_some_and(|p| p.len() != n) {
            return Err(Error::ShapeMismatch(format!("slices must have length {n}")));
        }
        let u = self.lift(current, self.pde.boundary)?;
        let earlier = if self.pde.is_second_order_in_time() {
            let c2 = self.pde.diffusivity();
            let fine_dt = self.dt / self.refine_t as f64;
            let velocity = match previous {
                Some(prev) => {
                    let d2 = Laplacian::new(n, self.coarse.dx(), self.pde.boundary).apply(current);
                    let v: Vec<f64> = current
                        .iter()
                        .zip(prev)
                        .zip(&d2)
                        .map(|((&c, &p), &l)| (c - p) / self.dt + 0.5 * self.dt * c2 * l)
                        .collect();
                    let vel_bc = match self.pde.boundary {
                        BoundarySpec::Dirichlet { .. } => BoundarySpec::Dirichlet { value: 0.0 },
                        b => b,
                    };
                    self.lift(&v, vel_bc)?
                }
                None => vec![0.0; u.len()],
            };
            let d2 = self.stepper.laplacian().apply(&u);
            Some(
                u.iter()
                    .zip(&velocity)
                    .zip(&d2)
                    .map(|((&u, &v), &l)| u - fine_dt * v + 0.5 * fine_dt * fine_dt * c2 * l)
                    .collect::<Vec<f64>>(),
            )
        } else {
            None
        };

        let total = self.refine_t * levels;
        let mut last = Vec::new();
        self.stepper.march(&u, earlier.as_deref(), total, |j, col| {
            if j == total {
                last = col.to_vec();
            }
        })?;
        Ok((1..=n).map(|i| last[i * self.refine_x - 1]).collect())
    }
}
