use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[-L, L]` with `n_interior` interior nodes plus the two
/// boundary nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    half_width: f64,
    n_interior: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(half_width: f64, n_interior: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid(format!("half-width must be positive, got {half_width}")));
        }
        if n_interior == 0 {
            return Err(Error::invalid("spatial grid needs at least one interior point"));
        }
        Ok(Self {
            half_width,
            n_interior,
            dx: 2.0 * half_width / (n_interior as f64 + 1.0),
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Coordinate of node `i`, `0 <= i <= n_interior + 1`. The end nodes are
    /// returned as exactly `-L` and `L`.
    pub fn point(&self, i: usize) -> f64 {
        if i == 0 {
            -self.half_width
        } else if i == self.n_interior + 1 {
            self.half_width
        } else {
            -self.half_width + i as f64 * self.dx
        }
    }

    /// All `n_interior + 2` nodes, boundaries included.
    pub fn points(&self) -> Vec<f64> {
        (0..self.n_interior + 2).map(|i| self.point(i)).collect()
    }

    pub fn interior_points(&self) -> Vec<f64> {
        (1..=self.n_interior).map(|i| self.point(i)).collect()
    }

    /// Grid whose node set contains this one, with `factor` sub-intervals per
    /// coarse interval.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be positive"));
        }
        Self::new(self.half_width, factor * (self.n_interior + 1) - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(Self {
            t_final,
            n_steps,
            dt: t_final / n_steps as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn level(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.t_final
        } else {
            j as f64 * self.dt
        }
    }

    pub fn levels(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.level(j)).collect()
    }

    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be positive"));
        }
        Self::new(self.t_final, self.n_steps * factor)
    }
}

/// Boundary condition applied at both ends of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Dirichlet { value: f64 },
    NeumannHomogeneous,
}

impl BoundarySpec {
    pub fn dirichlet(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid("Dirichlet boundary value must be finite"));
        }
        Ok(BoundarySpec::Dirichlet { value })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BoundarySpec::Dirichlet { value } if !value.is_finite() => {
                Err(Error::invalid("Dirichlet boundary value must be finite"))
            }
            _ => Ok(()),
        }
    }
}

pub fn build_grids(
    half_width: f64,
    n_interior: usize,
    t_final: f64,
    n_steps: usize,
) -> Result<(SpatialGrid, TimeGrid)> {
    Ok((SpatialGrid::new(half_width, n_interior)?, TimeGrid::new(t_final, n_steps)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_allen_cahn_grid() {
        let (x, t) = build_grids(1.0, 14, 0.5, 25).unwrap();
        assert!((x.dx() - 2.0 / 15.0).abs() < 1e-15);
        assert!((t.dt() - 0.02).abs() < 1e-15);
        assert_eq!(x.points().len(), 16);
        assert_eq!(x.point(0), -1.0);
        assert_eq!(x.point(15), 1.0);
        assert_eq!(t.level(0), 0.0);
        assert_eq!(t.level(25), 0.5);
    }

    #[test]
    fn smallest_grid() {
        let (x, t) = build_grids(1.0, 1, 1.0, 1).unwrap();
        assert_eq!(x.points(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(t.dt(), 1.0);
    }

    #[test]
    fn output_sweep_finest_grid() {
        let (x, t) = build_grids(1.0, 40, 0.5, 50).unwrap();
        assert!((x.dx() - 2.0 / 41.0).abs() < 1e-15);
        assert!((t.dt() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn points_strictly_increasing() {
        for n in 1..60 {
            let g = SpatialGrid::new(1.7, n).unwrap();
            let p = g.points();
            assert!(p.windows(2).all(|w| w[1] > w[0]));
            assert_eq!(p[0], -1.7);
            assert_eq!(*p.last().unwrap(), 1.7);
        }
    }

    #[test]
    fn rejects_non_positive_dimensions() {
        assert!(build_grids(0.0, 4, 1.0, 4).is_err());
        assert!(build_grids(1.0, 0, 1.0, 4).is_err());
        assert!(build_grids(1.0, 4, -1.0, 4).is_err());
        assert!(build_grids(1.0, 4, 1.0, 0).is_err());
        assert!(build_grids(f64::NAN, 4, 1.0, 4).is_err());
    }

    #[test]
    fn refined_grid_contains_coarse_nodes() {
        let g = SpatialGrid::new(1.0, 14).unwrap();
        let f = g.refined(8).unwrap();
        assert_eq!(f.n_interior(), 119);
        for i in 0..=15 {
            assert!((f.point(8 * i) - g.point(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn dirichlet_must_be_finite() {
        assert!(BoundarySpec::dirichlet(f64::INFINITY).is_err());
        assert!(BoundarySpec::dirichlet(-1.0).is_ok());
    }
}
