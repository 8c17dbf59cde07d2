use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Student t cumulative distribution function.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of Student's t distribution by bisection on the CDF.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile level {p} outside (0, 1)")));
    }
    if !(df >= 1.0) || !df.is_finite() {
        return Err(Error::invalid(format!("degrees of freedom {df} must be >= 1")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p < 0.5 {
        return t_quantile(1.0 - p, df).map(|t| -t);
    }
    let mut hi = 1.0;
    while t_cdf(hi, df) < p {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::invalid("t quantile out of range"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Log10,
    Linear,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Self::Log10 => "log10",
            Self::Linear => "linear",
        }
    }
}

/// Sample mean with a 95% Student-t interval, both in value units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub count: usize,
    pub scale: Scale,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Mean and 95% interval of `values`. On the log scale the interval is
/// symmetric in `log10` with half-width `t sigma / (E sqrt(M) ln 10)`.
pub fn aggregate_ci(values: &[f64], scale: Scale) -> Result<Aggregate> {
    let m = values.len();
    if m < 2 {
        return Err(Error::invalid(format!("confidence interval needs at least 2 values, got {m}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in aggregate"));
    }
    let (mean, sigma) = mean_and_std(values);
    let t = t_quantile(0.975, (m - 1) as f64)?;
    let (ci_lo, ci_hi) = match scale {
        Scale::Linear => {
            let half = t * sigma / (m as f64).sqrt();
            (mean - half, mean + half)
        }
        Scale::Log10 => {
            if values.iter().any(|v| *v <= 0.0) {
                return Err(Error::invalid("log-scale interval needs positive values"));
            }
            let half = t * sigma / (mean * (m as f64).sqrt() * std::f64::consts::LN_10);
            if half == 0.0 {
                return Ok(Aggregate {
                    mean,
                    ci_lo: mean,
                    ci_hi: mean,
                    count: m,
                    scale,
                });
            }
            let centre = mean.log10();
            (10f64.powf(centre - half), 10f64.powf(centre + half))
        }
    };
    Ok(Aggregate {
        mean,
        ci_lo,
        ci_hi,
        count: m,
        scale,
    })
}

/// Log-scale aggregate, falling back to the linear scale when some value is
/// not positive; a single value yields NaN bounds.
pub fn aggregate_preferring_log(values: &[f64]) -> Result<Aggregate> {
    match values.len() {
        0 => Err(Error::invalid("no values to aggregate")),
        1 => Ok(Aggregate {
            mean: values[0],
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            count: 1,
            scale: Scale::Log10,
        }),
        _ if values.iter().all(|v| *v > 0.0) => aggregate_ci(values, Scale::Log10),
        _ => aggregate_ci(values, Scale::Linear),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through `(log10 x, log10 y)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!("{} x values, {} y values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("log-log fit needs at least 2 points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log10()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("log-log fit needs at least two distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

    #[test]
    fn t_quantile_examples() {
        assert_eq!(t_quantile(0.5, 7.0).unwrap(), 0.0);
        assert!((t_quantile(0.975, 19.0).unwrap() - 2.0930).abs() < 1e-3);
        assert!((t_quantile(0.975, 1e6).unwrap() - 1.95996).abs() < 1e-4);
        assert!((t_quantile(0.975, 1.0).unwrap() - 12.7062).abs() < 1e-4);
        assert!(t_quantile(0.0, 3.0).is_err());
        assert!(t_quantile(0.5, 0.5).is_err());
    }

    #[test]
    fn t_quantile_agrees_with_statrs() {
        for df in [1.0, 2.0, 3.0, 5.0, 9.0, 19.0, 49.0, 399.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for p in [0.6, 0.9, 0.95, 0.975, 0.995, 0.025] {
                let ours = t_quantile(p, df).unwrap();
                assert!((ours - dist.inverse_cdf(p)).abs() < 1e-8 * ours.abs().max(1.0), "df {df} p {p}");
            }
        }
    }

    #[test]
    fn t_quantile_approaches_normal() {
        let z = Normal::standard().inverse_cdf(0.975);
        let mut last = f64::INFINITY;
        for df in [10.0, 100.0, 1000.0, 1e5] {
            let t = t_quantile(0.975, df).unwrap();
            assert!(t < last && t > z);
            last = t;
        }
        assert!(last - z < 1e-4);
    }

    #[test]
    fn constant_values_give_degenerate_interval() {
        for scale in [Scale::Linear, Scale::Log10] {
            let a = aggregate_ci(&[0.3; 5], scale).unwrap();
            assert_eq!((a.ci_lo, a.ci_hi), (0.3, 0.3));
        }
    }

    #[test]
    fn two_values_linear_interval() {
        let a = aggregate_ci(&[1.0, 3.0], Scale::Linear).unwrap();
        assert_eq!(a.mean, 2.0);
        assert!((a.ci_hi - a.mean - 12.7062).abs() < 1e-4);
        assert!((a.mean - a.ci_lo - 12.7062).abs() < 1e-4);
    }

    #[test]
    fn log_scale_rejects_non_positive_and_fallback() {
        assert!(aggregate_ci(&[0.0, 1.0], Scale::Log10).is_err());
        assert_eq!(aggregate_preferring_log(&[0.0, 1.0]).unwrap().scale, Scale::Linear);
        assert_eq!(aggregate_preferring_log(&[0.5, 1.0]).unwrap().scale, Scale::Log10);
        assert!(aggregate_preferring_log(&[0.5]).unwrap().ci_lo.is_nan());
        assert!(aggregate_ci(&[1.0], Scale::Linear).is_err());
    }

    #[test]
    fn log_interval_matches_direct_formula_on_lognormal_data() {
        use rand_distr::{Distribution, LogNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ln = LogNormal::new(-3.0, 0.7).unwrap();
        for m in [2usize, 5, 20, 50] {
            let v: Vec<f64> = (0..m).map(|_| ln.sample(&mut rng)).collect();
            let a = aggregate_ci(&v, Scale::Log10).unwrap();
            // second implementation: statrs quantile, two-pass variance
            let e = v.iter().sum::<f64>() / m as f64;
            let s = (v.iter().map(|x| (x - e).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
            let t = StudentsT::new(0.0, 1.0, (m - 1) as f64).unwrap().inverse_cdf(0.975);
            let half = t * s / (e * (m as f64).sqrt() * 10f64.ln());
            assert!((a.ci_lo.log10() - (e.log10() - half)).abs() < 1e-9);
            assert!((a.ci_hi.log10() - (e.log10() + half)).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_examples() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        let f = loglog_slope(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.log10()).abs() < 1e-12);
        assert!(loglog_slope(&xs, &[5.0; 4]).unwrap().slope.abs() < 1e-15);
        assert!(loglog_slope(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn t_quantile_monotone_in_p(df in 1.0f64..200.0, p in 0.51f64..0.99, dp in 0.001f64..0.009) {
            prop_assert!(t_quantile(p + dp, df).unwrap() > t_quantile(p, df).unwrap());
        }

        #[test]
        fn ci_brackets_mean(v in proptest::collection::vec(0.01f64..10.0, 2..30)) {
            for scale in [Scale::Linear, Scale::Log10] {
                let a = aggregate_ci(&v, scale).unwrap();
                prop_assert!(a.ci_lo <= a.mean * (1.0 + 1e-12) && a.mean <= a.ci_hi * (1.0 + 1e-12));
            }
        }
    }
}
