//! Cubic interpolating splines with not-a-knot end conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::tridiag::thomas_solve;

/// Piecewise cubic `s(x) = a + b (x - x_k) + c (x - x_k)^2 + d (x - x_k)^3` on
/// each interval `[x_k, x_{k+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    coefficients: Vec<[f64; 4]>,
}

impl CubicSpline {
    /// Fits the not-a-knot interpolant. Two knots give the secant line and
    /// three knots the interpolating parabola, which is what the not-a-knot
    /// conditions reduce to in those cases.
    pub fn not_a_knot(knots: &[f64], values: &[f64]) -> Result<Self> {
        let n = knots.len();
        if n < 2 {
            return Err(Error::invalid("spline needs at least two knots"));
        }
        if values.len() != n {
            return Err(Error::ShapeMismatch(format!("{n} knots but {} values", values.len())));
        }
        if knots.iter().chain(values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("spline knots and values must be finite"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("spline knots must be strictly increasing"));
        }

        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let second = match n {
            2 => vec![0.0, 0.0],
            3 => {
                // single parabola: constant second derivative
                let s0 = (values[1] - values[0]) / h[0];
                let s1 = (values[2] - values[1]) / h[1];
                let m = 2.0 * (s1 - s0) / (h[0] + h[1]);
                vec![m; 3]
            }
            _ => not_a_knot_second_derivatives(&h, values)?,
        };

        let coefficients = (0..n - 1)
            .map(|k| {
                let hk = h[k];
                let (m0, m1) = (second[k], second[k + 1]);
                [
                    values[k],
                    (values[k + 1] - values[k]) / hk - hk * (2.0 * m0 + m1) / 6.0,
                    m0 / 2.0,
                    (m1 - m0) / (6.0 * hk),
                ]
            })
            .collect();

        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            coefficients,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coefficients
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&x) {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        let k = self.knots.partition_point(|&k| k <= x).saturating_sub(1);
        let k = k.min(self.coefficients.len() - 1);
        Ok((k, x - self.knots[k]))
    }

    /// Value at `x`. Knot abscissae return the stored knot value exactly.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x == *self.knots.last().unwrap() {
            return Ok(*self.values.last().unwrap());
        }
        let (k, t) = self.locate(x)?;
        let [a, b, c, d] = self.coefficients[k];
        Ok(a + t * (b + t * (c + t * d)))
    }

    /// Derivative of order `order` (0..=3) at `x`, taken from the piece whose
    /// interval contains `x` (right-continuous, except at the last knot).
    pub fn derivative(&self, x: f64, order: u8) -> Result<f64> {
        let (k, t) = self.locate(x)?;
        self.piece_derivative(k, t, order)
    }

    /// Derivative of piece `k` evaluated at local offset `t`, without domain
    /// checks. Used to compare one-sided limits at knots.
    pub fn piece_derivative(&self, k: usize, t: f64, order: u8) -> Result<f64> {
        let [a, b, c, d] = *self
            .coefficients
            .get(k)
            .ok_or_else(|| Error::invalid(format!("no spline piece {k}")))?;
        Ok(match order {
            0 => a + t * (b + t * (c + t * d)),
            1 => b + t * (2.0 * c + 3.0 * t * d),
            2 => 2.0 * c + 6.0 * t * d,
            3 => 6.0 * d,
            _ => return Err(Error::invalid("derivative order must be at most 3")),
        })
    }
}

/// Second derivatives at the knots for `n >= 4` knots. The two not-a-knot
/// conditions are eliminated into the first and last continuity rows so the
/// remaining system is tridiagonal in `M_1 .. M_{n-2}`.
fn not_a_knot_second_derivatives(h: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let k = n - 2;
    let mut lower = vec![0.0; k - 1];
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k - 1];
    let mut rhs = vec![0.0; k];

    for row in 0..k {
        let i = row + 1;
        let (hl, hr) = (h[i - 1], h[i]);
        diag[row] = 2.0 * (hl + hr);
        rhs[row] = 6.0 * ((y[i + 1] - y[i]) / hr - (y[i] - y[i - 1]) / hl);
        if row > 0 {
            lower[row - 1] = hl;
        }
        if row + 1 < k {
            upper[row] = hr;
        }
    }

    // M_0 = ((h0 + h1) M_1 - h0 M_2) / h1
    let (h0, h1) = (h[0], h[1]);
    diag[0] += h0 * (h0 + h1) / h1;
    upper[0] -= h0 * h0 / h1;

    // M_{n-1} = ((h_{n-3} + h_{n-2}) M_{n-2} - h_{n-2} M_{n-3}) / h_{n-3}
    let (ha, hb) = (h[n - 3], h[n - 2]);
    diag[k - 1] += hb * (ha + hb) / ha;
    lower[k - 2] -= hb * hb / ha;

    let inner = thomas_solve(&lower, &diag, &upper, &rhs)?;
    let mut m = Vec::with_capacity(n);
    m.push(((h0 + h1) * inner[0] - h0 * inner[1]) / h1);
    m.extend_from_slice(&inner);
    m.push(((ha + hb) * inner[k - 1] - hb * inner[k - 2]) / ha);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_knots(n: usize) -> Vec<f64> {
        (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn reproduces_cubic_polynomials_exactly() {
        // not-a-knot splines are exact on cubics
        let p = |x: f64| 0.3 - 1.2 * x + 0.7 * x * x + 2.1 * x * x * x;
        for n in [4, 5, 9, 16] {
            let knots = uniform_knots(n);
            let vals: Vec<f64> = knots.iter().map(|&x| p(x)).collect();
            let s = CubicSpline::not_a_knot(&knots, &vals).unwrap();
            for i in 0..=200 {
                let x = -1.0 + 2.0 * i as f64 / 200.0;
                assert!((s.eval(x).unwrap() - p(x)).abs() < 1e-11, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn three_knots_give_parabola() {
        let knots = [-1.0, 0.2, 1.0];
        let q = |x: f64| 1.0 - 2.0 * x + 3.0 * x * x;
        let vals: Vec<f64> = knots.iter().map(|&x| q(x)).collect();
        let s = CubicSpline::not_a_knot(&knots, &vals).unwrap();
        for x in [-0.9, -0.3, 0.5, 0.99] {
            assert!((s.eval(x).unwrap() - q(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_knots_give_line() {
        let s = CubicSpline::not_a_knot(&[0.0, 2.0], &[1.0, 5.0]).unwrap();
        assert!((s.eval(0.5).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn continuity_and_not_a_knot_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(4..30);
            let knots = uniform_knots(n);
            let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = CubicSpline::not_a_knot(&knots, &vals).unwrap();
            let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (i, (&x, &v)) in knots.iter().zip(&vals).enumerate() {
                assert!((s.eval(x).unwrap() - v).abs() <= 1e-12 * scale, "knot {i}");
            }
            for k in 1..n - 1 {
                let h = knots[k] - knots[k - 1];
                for order in 0..=2u8 {
                    let left = s.piece_derivative(k - 1, h, order).unwrap();
                    let right = s.piece_derivative(k, 0.0, order).unwrap();
                    let tol = if order == 2 { 1e-8 } else { 1e-10 };
                    assert!(
                        (left - right).abs() <= tol * (1.0 + left.abs().max(right.abs())),
                        "order {order} at knot {k}: {left} vs {right}"
                    );
                }
            }
            for k in [1, n - 2] {
                let l3 = s.piece_derivative(k - 1, 0.0, 3).unwrap();
                let r3 = s.piece_derivative(k, 0.0, 3).unwrap();
                assert!((l3 - r3).abs() <= 1e-6 * (1.0 + l3.abs().max(r3.abs())));
            }
        }
    }

    #[test]
    fn evaluation_outside_domain_is_an_error() {
        let s = CubicSpline::not_a_knot(&uniform_knots(5), &[0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(s.eval(1.0 + 1e-12), Err(Error::OutOfDomain { .. })));
        assert!(s.eval(-1.5).is_err());
        assert_eq!(s.eval(1.0).unwrap(), 0.0);
        assert_eq!(s.eval(-1.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CubicSpline::not_a_knot(&[0.0], &[1.0]).is_err());
        assert!(CubicSpline::not_a_knot(&[0.0, 0.0, 1.0], &[1.0, 1.0, 1.0]).is_err());
        assert!(CubicSpline::not_a_knot(&[0.0, 1.0], &[1.0]).is_err());
        assert!(CubicSpline::not_a_knot(&[0.0, 1.0], &[1.0, f64::NAN]).is_err());
    }
}
