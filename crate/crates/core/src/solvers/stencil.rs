//! Second-difference operator on interior nodes.

use super::tridiag::Tridiagonal;
use crate::grid_ic::BoundarySpec;

/// `D2 u = A u + b`, where `A` acts on the interior values and `b` carries the
/// Dirichlet boundary contribution.
///
/// Dirichlet ghosts hold the boundary value. Neumann ghosts use the
/// second-order one-sided reconstruction `u_0 = (4 u_1 - u_2) / 3` (and its
/// mirror on the right), which keeps the state interior-only; with a single
/// interior node this degenerates to `u_0 = u_1`.
#[derive(Debug, Clone)]
pub struct Laplacian {
    matrix: Tridiagonal,
    boundary: Vec<f64>,
}

impl Laplacian {
    pub fn new(n: usize, dx: f64, bc: BoundarySpec) -> Self {
        assert!(n >= 1, "Laplacian needs at least one interior node");
        let s = 1.0 / (dx * dx);
        let mut lower = vec![s; n - 1];
        let mut diag = vec![-2.0 * s; n];
        let mut upper = vec![s; n - 1];
        let mut boundary = vec![0.0; n];
        match bc {
            BoundarySpec::Dirichlet { value } => {
                boundary[0] += value * s;
                boundary[n - 1] += value * s;
            }
            BoundarySpec::NeumannHomogeneous => {
                if n == 1 {
                    diag[0] = 0.0;
                } else {
                    diag[0] = -2.0 / 3.0 * s;
                    upper[0] = 2.0 / 3.0 * s;
                    diag[n - 1] = -2.0 / 3.0 * s;
                    lower[n - 2] = 2.0 / 3.0 * s;
                }
            }
        }
        Self {
            matrix: Tridiagonal { lower, diag, upper },
            boundary,
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.matrix.matvec(u);
        for (o, b) in out.iter_mut().zip(&self.boundary) {
            *o += b;
        }
        out
    }

    /// Boundary contribution `b`.
    pub fn boundary_term(&self) -> &[f64] {
        &self.boundary
    }

    /// `I - mu A`.
    pub fn shifted_identity(&self, mu: f64) -> Tridiagonal {
        let m = &self.matrix;
        Tridiagonal {
            lower: m.lower.iter().map(|v| -mu * v).collect(),
            diag: m.diag.iter().map(|v| 1.0 - mu * v).collect(),
            upper: m.upper.iter().map(|v| -mu * v).collect(),
        }
    }
}

/// Boundary node values implied by the interior state.
pub fn boundary_values(interior: &[f64], bc: BoundarySpec) -> (f64, f64) {
    match bc {
        BoundarySpec::Dirichlet { value } => (value, value),
        BoundarySpec::NeumannHomogeneous => neumann_reconstruction(interior),
    }
}

/// Second-order zero-flux reconstruction of the two boundary nodes.
pub fn neumann_reconstruction(interior: &[f64]) -> (f64, f64) {
    let n = interior.len();
    if n == 1 {
        return (interior[0], interior[0]);
    }
    (
        (4.0 * interior[0] - interior[1]) / 3.0,
        (4.0 * interior[n - 1] - interior[n - 2]) / 3.0,
    )
}

/// Interior values padded with their boundary nodes.
pub fn with_boundary(interior: &[f64], bc: BoundarySpec) -> Vec<f64> {
    let (l, r) = boundary_values(interior, bc);
    let mut full = Vec::with_capacity(interior.len() + 2);
    full.push(l);
    full.extend_from_slice(interior);
    full.push(r);
    full
}

#[cfg(test)]
mod tests {
    use super::*;

    fn explicit_d2(full: &[f64], dx: f64) -> Vec<f64> {
        full.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]) / (dx * dx)).collect()
    }

    #[test]
    fn matches_ghost_node_stencil() {
        let u = [0.3, -0.1, 0.7, 0.2, 0.9];
        let dx = 0.25;
        for bc in [BoundarySpec::Dirichlet { value: -1.0 }, BoundarySpec::NeumannHomogeneous] {
            let lap = Laplacian::new(u.len(), dx, bc);
            let direct = explicit_d2(&with_boundary(&u, bc), dx);
            for (a, b) in lap.apply(&u).iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_node() {
        let lap = Laplacian::new(1, 0.5, BoundarySpec::Dirichlet { value: 0.0 });
        assert_eq!(lap.apply(&[1.0]), vec![-8.0]);
        let lap = Laplacian::new(1, 0.5, BoundarySpec::NeumannHomogeneous);
        assert_eq!(lap.apply(&[1.0]), vec![0.0]);
    }

    #[test]
    fn neumann_reconstruction_is_exact_on_zero_slope_quadratics() {
        // u = (x - x0)^2 + 2 has u'(x0) = 0; nodes at x0 + dx, x0 + 2dx
        let dx = 0.1;
        let (l, _) = neumann_reconstruction(&[dx * dx + 2.0, 4.0 * dx * dx + 2.0]);
        assert!((l - 2.0).abs() < 1e-14);
        // not exact for a sloped line: it imposes zero slope
        let (l, r) = neumann_reconstruction(&[3.0, 5.0, 7.0]);
        assert_eq!(l, 7.0 / 3.0);
        assert_eq!(r, 23.0 / 3.0);
    }
}
