//! Deterministic inputs shared by the benchmarks.

use pdecast_core::grid_ic::{build_grids, sample_random_ic, IcParams, IcSeed};
use pdecast_core::solvers::{reference_solution, PdeSpec, SolutionField};

/// Diagonally dominant system `(lower, diag, upper, rhs)` with `n` rows.
pub fn dominant_system(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let lower = (1..n).map(|i| -1.0 - 0.5 * (i as f64 * 0.1).sin().abs()).collect();
    let upper = (1..n).map(|i| -1.0 + 0.5 * (i as f64 * 0.2).cos().abs()).collect();
    let diag = (0..n).map(|i| 4.0 + (i % 3) as f64).collect();
    let rhs = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    (lower, diag, upper, rhs)
}

/// Allen-Cahn reference from trial 0 of seed 0 at the default refinement.
pub fn allen_cahn_reference(n_x: usize, n_t: usize) -> SolutionField {
    let pde = PdeSpec::allen_cahn();
    let ic = sample_random_ic(IcSeed::trial(0, 0), IcParams::new(1.0, n_x, -0.5, 0.5), pde.boundary)
        .expect("valid IC parameters");
    let (spatial, time) = build_grids(1.0, n_x, 0.5, n_t).expect("valid grids");
    reference_solution(&pde, &ic, &spatial, &time, 8, 64).expect("stable refinement")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_shapes() {
        let (l, d, u, r) = dominant_system(10);
        assert_eq!((l.len(), d.len(), u.len(), r.len()), (9, 10, 9, 10));
        assert!(pdecast_core::solvers::thomas_solve(&l, &d, &u, &r).is_ok());
        assert_eq!(allen_cahn_reference(14, 5).values().dim(), (14, 6));
    }
}
