//! Tridiagonal systems.
//!
//! The band is stored as three vectors: `lower[i]` multiplies `x[i]` in row
//! `i + 1`, `upper[i]` multiplies `x[i + 1]` in row `i`. Both have length
//! `n - 1`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::invalid("tridiagonal system must have at least one row"));
        }
        if lower.len() != n - 1 || upper.len() != n - 1 {
            return Err(Error::ShapeMismatch(format!(
                "off-diagonals must have length {} (got lower {}, upper {})",
                n - 1,
                lower.len(),
                upper.len()
            )));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.upper[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        thomas_solve(&self.lower, &self.diag, &self.upper, rhs)
    }
}

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// No pivoting is done, so the system should be diagonally dominant (the
/// implicit operators `I - mu * D2` always are). A pivot that vanishes
/// relative to its row magnitude yields [`Error::SingularSystem`].
pub fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::invalid("tridiagonal system must have at least one row"));
    }
    if lower.len() != n - 1 || upper.len() != n - 1 || rhs.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "expected off-diagonals of length {} and rhs of length {n}, got {}, {}, {}",
            n - 1,
            lower.len(),
            upper.len(),
            rhs.len()
        )));
    }

    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];

    let check = |pivot: f64, row: usize| -> Result<()> {
        let scale = diag[row].abs()
            + if row > 0 { lower[row - 1].abs() } else { 0.0 }
            + if row + 1 < n { upper[row].abs() } else { 0.0 };
        if !pivot.is_finite() || pivot.abs() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
            Err(Error::SingularSystem { row })
        } else {
            Ok(())
        }
    };

    check(diag[0], 0)?;
    if n > 1 {
        c_prime[0] = upper[0] / diag[0];
    }
    d_prime[0] = rhs[0] / diag[0];

    for i in 1..n {
        let denom = diag[i] - lower[i - 1] * c_prime[i - 1];
        check(denom, i)?;
        if i + 1 < n {
            c_prime[i] = upper[i] / denom;
        }
        d_prime[i] = (rhs[i] - lower[i - 1] * d_prime[i - 1]) / denom;
    }

    let mut x = d_prime;
    for i in (0..n - 1).rev() {
        x[i] -= c_prime[i] * x[i + 1];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting, used as an oracle.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn identity_returns_rhs() {
        let b = vec![3.0, -1.5, 7.25, 0.0];
        let x = thomas_solve(&[0.0; 3], &[1.0; 4], &[0.0; 3], &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn second_difference_three_by_three() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1]  =>  x = [1 1 1]
        let x = thomas_solve(&[-1.0, -1.0], &[2.0; 3], &[-1.0, -1.0], &[1.0, 0.0, 1.0]).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_row() {
        let x = thomas_solve(&[], &[4.0], &[], &[2.0]).unwrap();
        assert_eq!(x, vec![0.5]);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let err = thomas_solve(&[1.0], &[0.0, 1.0], &[1.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { row: 0 }));
        // second pivot cancels: 1 - 1*1 = 0
        let err = thomas_solve(&[1.0], &[1.0, 1.0], &[1.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { row: 1 }));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            thomas_solve(&[1.0, 1.0], &[2.0; 2], &[1.0], &[0.0; 2]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn random_dominant_systems_match_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let lower: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let upper: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let diag: Vec<f64> = (0..n)
                .map(|i| {
                    let off = if i > 0 { lower[i - 1].abs() } else { 0.0 }
                        + if i + 1 < n { upper[i].abs() } else { 0.0 };
                    (off + rng.random_range(0.1..2.0)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                })
                .collect();
            let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();

            let x = thomas_solve(&lower, &diag, &upper, &rhs).unwrap();

            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                dense[i][i] = diag[i];
                if i > 0 {
                    dense[i][i - 1] = lower[i - 1];
                }
                if i + 1 < n {
                    dense[i][i + 1] = upper[i];
                }
            }
            let oracle = dense_solve(dense, rhs.clone());
            for (a, b) in x.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
            }

            let m = Tridiagonal::new(lower, diag, upper).unwrap();
            let r = m.matvec(&x);
            let rhs_norm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let res = r.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(res <= 1e-10 * rhs_norm.max(1e-300));
        }
    }
}
