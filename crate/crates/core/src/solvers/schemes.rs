//! Explicit and implicit time steppers.

use ndarray::Array2;

use super::field::SolutionField;
use super::pde::{PdeSpec, SchemeId};
use super::stencil::Laplacian;
use crate::error::{Error, Result};
use crate::grid_ic::{SpatialGrid, TimeGrid};

/// Magnitude beyond which a solution is considered to have blown up.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// One time-stepping problem: equation, scheme and step sizes. The operator is
/// assembled once and reused for every step.
#[derive(Debug, Clone)]
pub struct Stepper {
    pde: PdeSpec,
    scheme: SchemeId,
    dt: f64,
    laplacian: Laplacian,
}

impl Stepper {
    pub fn new(pde: PdeSpec, scheme: SchemeId, n_interior: usize, dx: f64, dt: f64) -> Result<Self> {
        pde.validate()?;
        scheme.check_compatible(&pde)?;
        if n_interior == 0 || !(dx > 0.0) || !(dt > 0.0) {
            return Err(Error::invalid("stepper needs N_X >= 1, dx > 0 and dt > 0"));
        }
        Ok(Self {
            pde,
            scheme,
            dt,
            laplacian: Laplacian::new(n_interior, dx, pde.boundary),
        })
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn pde(&self) -> &PdeSpec {
        &self.pde
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    /// Advances one step. `previous` is the level before `current` and is only
    /// read by the three-level wave schemes; when it is absent they take the
    /// zero-initial-velocity Taylor start `u1 = u0 + (c dt)^2 / 2 D2 u0`.
    /// `step` is the index of the level being produced, used in diagnostics.
    pub fn advance(&self, previous: Option<&[f64]>, current: &[f64], step: usize) -> Result<Vec<f64>> {
        let n = self.laplacian.len();
        if current.len() != n || previous.is_some_and(|p| p.len() != n) {
            return Err(Error::ShapeMismatch(format!("state columns must have length {n}")));
        }
        let dt = self.dt;
        let kappa = self.pde.diffusivity();
        let pde = &self.pde;

        let next = match self.scheme {
            SchemeId::Ftcs => {
                let d2 = self.laplacian.apply(current);
                current
                    .iter()
                    .zip(&d2)
                    .map(|(&u, &l)| u + dt * (kappa * l + pde.source(u)))
                    .collect()
            }
            SchemeId::Imex | SchemeId::Btcs => {
                let mu = dt * kappa;
                let rhs: Vec<f64> = current
                    .iter()
                    .zip(self.laplacian.boundary_term())
                    .map(|(&u, &b)| u + dt * pde.source(u) + mu * b)
                    .collect();
                self.laplacian.shifted_identity(mu).solve(&rhs)?
            }
            SchemeId::Leapfrog => {
                let d2 = self.laplacian.apply(current);
                let r = kappa * dt * dt;
                match previous {
                    None => current.iter().zip(&d2).map(|(&u, &l)| u + 0.5 * r * l).collect(),
                    Some(prev) => current
                        .iter()
                        .zip(prev)
                        .zip(&d2)
                        .map(|((&u, &p), &l)| 2.0 * u - p + r * l)
                        .collect(),
                }
            }
            SchemeId::CrankNicolson => match previous {
                None => {
                    let d2 = self.laplacian.apply(current);
                    let r = kappa * dt * dt;
                    current.iter().zip(&d2).map(|(&u, &l)| u + 0.5 * r * l).collect()
                }
                Some(prev) => {
                    // (u+ - 2u + u-) / dt^2 = c^2 / 2 (D2 u+ + D2 u-)
                    let mu = 0.5 * kappa * dt * dt;
                    let d2_prev = self.laplacian.apply(prev);
                    let rhs: Vec<f64> = current
                        .iter()
                        .zip(prev)
                        .zip(&d2_prev)
                        .zip(self.laplacian.boundary_term())
                        .map(|(((&u, &p), &l), &b)| 2.0 * u - p + mu * l + mu * b)
                        .collect();
                    self.laplacian.shifted_identity(mu).solve(&rhs)?
                }
            },
        };
        self.check_finite(&next, step)?;
        Ok(next)
    }

    fn check_finite(&self, u: &[f64], step: usize) -> Result<()> {
        if let Some((i, v)) = u
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
        {
            return Err(Error::Divergence {
                scheme: self.scheme.name().into(),
                step,
                detail: format!("u[{i}] = {v}"),
            });
        }
        Ok(())
    }

    /// Marches `n_steps` from `initial` (and an optional earlier level for
    /// three-level schemes), calling `visit(j, column)` for every level
    /// including `j = 0`.
    pub fn march<F>(&self, initial: &[f64], earlier: Option<&[f64]>, n_steps: usize, mut visit: F) -> Result<()>
    where
        F: FnMut(usize, &[f64]),
    {
        self.check_finite(initial, 0)?;
        visit(0, initial);
        let mut prev: Option<Vec<f64>> = earlier.map(<[f64]>::to_vec);
        let mut cur = initial.to_vec();
        for j in 1..=n_steps {
            let next = self.advance(prev.as_deref(), &cur, j)?;
            visit(j, &next);
            prev = Some(std::mem::replace(&mut cur, next));
        }
        Ok(())
    }
}

/// Solves on the given grids from interior initial values.
pub fn solve(
    pde: &PdeSpec,
    scheme: SchemeId,
    initial: &[f64],
    spatial: &SpatialGrid,
    time: &TimeGrid,
) -> Result<SolutionField> {
    let n = spatial.n_interior();
    if initial.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "initial condition has {} values for N_X = {n}",
            initial.len()
        )));
    }
    let stepper = Stepper::new(*pde, scheme, n, spatial.dx(), time.dt())?;
    let mut values = Array2::zeros((n, time.n_steps() + 1));
    stepper.march(initial, None, time.n_steps(), |j, col| {
        values.column_mut(j).iter_mut().zip(col).for_each(|(d, s)| *d = *s);
    })?;
    SolutionField::new(values, spatial.clone(), time.clone(), *pde)
}
