use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid_ic::Profile;
use crate::solvers::neumann_reconstruction;

/// Smallest `|E(0)|` for which a relative deviation is reported.
pub const ENERGY_THRESHOLD: f64 = 1e-6;
/// Trapezoid intervals used for the initial-condition energy.
pub const IC_QUADRATURE_INTERVALS: usize = 16_384;

/// Trapezoid integral over `[-L, L]` of the interior values extended by the
/// homogeneous-Neumann boundary reconstruction.
pub fn discrete_energy(interior: &[f64], dx: f64) -> f64 {
    let (left, right) = neumann_reconstruction(interior);
    dx * (0.5 * (left + right) + interior.iter().sum::<f64>())
}

/// Trapezoid integral of a profile over `[-L, L]` with `intervals` pieces.
pub fn ic_energy(profile: &dyn Profile, half_width: f64, intervals: usize) -> f64 {
    let h = 2.0 * half_width / intervals as f64;
    let inner: f64 = (1..intervals).map(|k| profile.value(-half_width + k as f64 * h)).sum();
    h * (0.5 * (profile.value(-half_width) + profile.value(half_width)) + inner)
}

/// Relative energy deviation in percent, one value per column.
pub fn energy_deviation(columns: &Array2<f64>, dx: f64, e0: f64) -> Result<Vec<f64>> {
    if e0.abs() <= ENERGY_THRESHOLD || !e0.is_finite() {
        return Err(Error::DegenerateEnergy(e0));
    }
    if columns.nrows() < 2 {
        return Err(Error::invalid("energy needs at least two interior points"));
    }
    Ok(columns
        .columns()
        .into_iter()
        .map(|c| {
            let e = discrete_energy(&c.to_vec(), dx);
            (e - e0).abs() / e0.abs() * 100.0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_ic::SpatialGrid;

    #[test]
    fn constant_field_conserves_exactly() {
        let g = SpatialGrid::new(1.0, 9).unwrap();
        let ones = Array2::from_elem((9, 6), 1.0);
        assert!((discrete_energy(&[1.0; 9], g.dx()) - 2.0).abs() < 1e-14);
        let e0 = ic_energy(&|_x: f64| 1.0, 1.0, IC_QUADRATURE_INTERVALS);
        assert!((e0 - 2.0).abs() < 1e-12);
        let d = energy_deviation(&ones, g.dx(), 2.0).unwrap();
        assert!(d.iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn degenerate_energy_is_rejected() {
        let z = Array2::zeros((4, 2));
        assert!(matches!(energy_deviation(&z, 0.1, 1e-7), Err(Error::DegenerateEnergy(_))));
    }

    #[test]
    fn even_quadratic_is_integrated_exactly_by_reconstruction() {
        // zero-slope quadratic: reconstruction exact, trapezoid error known
        let g = SpatialGrid::new(1.0, 19).unwrap();
        let f = |x: f64| (x - 1.0).powi(2);
        let u: Vec<f64> = g.interior_points().into_iter().map(f).collect();
        let dx = g.dx();
        // composite trapezoid of (x-1)^2 on [-1, 1]: 8/3 + dx^2 * 2 * 2 / 12 * ... = 8/3 + (b-a) h^2 f''/12
        let expected = 8.0 / 3.0 + 2.0 * dx * dx * 2.0 / 12.0;
        let (l, _) = neumann_reconstruction(&u);
        // left end of (x-1)^2 has slope -4, so only the right end is reconstructed exactly
        assert!((l - f(-1.0)).abs() > 1e-3);
        let right_exact = dx * (0.5 * (f(-1.0) + f(1.0)) + u.iter().sum::<f64>());
        assert!((right_exact - expected).abs() < 1e-12);
    }

    #[test]
    fn ic_energy_of_sine_mode() {
        let e = ic_energy(&|x: f64| 1.0 + (std::f64::consts::PI * x).cos(), 1.0, IC_QUADRATURE_INTERVALS);
        assert!((e - 2.0).abs() < 1e-7);
    }
}
