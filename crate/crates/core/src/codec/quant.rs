use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest in-distribution code.
pub const CODE_MIN: u16 = 150;
/// Largest in-distribution code.
pub const CODE_MAX: u16 = 850;
/// Code assigned to every value of a constant field.
pub const CODE_DEGENERATE: u16 = 500;
/// Number of code steps spanning `[u_min, u_max]`.
pub const CODE_SPAN: f64 = 700.0;

/// Extrema defining the affine map between values and codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantRange {
    pub u_min: f64,
    pub u_max: f64,
}

impl QuantRange {
    pub fn new(u_min: f64, u_max: f64) -> Result<Self> {
        if !u_min.is_finite() || !u_max.is_finite() || u_min > u_max {
            return Err(Error::invalid(format!("invalid quantization range [{u_min}, {u_max}]")));
        }
        Ok(Self { u_min, u_max })
    }

    /// Extrema over every entry.
    pub fn of<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut any = false;
        for &v in values {
            if !v.is_finite() {
                return Err(Error::invalid("cannot quantize non-finite values"));
            }
            lo = lo.min(v);
            hi = hi.max(v);
            any = true;
        }
        if !any {
            return Err(Error::invalid("cannot quantize an empty field"));
        }
        Self::new(lo, hi)
    }

    pub fn span(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn is_degenerate(&self) -> bool {
        self.u_max == self.u_min
    }

    /// Half a code step: the worst-case rounding error.
    pub fn half_step(&self) -> f64 {
        self.span() / (2.0 * CODE_SPAN)
    }

    /// Nearest code, ties to even. Values outside the range saturate.
    pub fn encode(&self, u: f64) -> u16 {
        if self.is_degenerate() {
            return CODE_DEGENERATE;
        }
        let q = (CODE_MIN as f64 + (u - self.u_min) * CODE_SPAN / self.span()).round_ties_even();
        q.clamp(CODE_MIN as f64, CODE_MAX as f64) as u16
    }

    /// Value of a code. Codes outside `[CODE_MIN, CODE_MAX]` are clamped first.
    pub fn decode(&self, code: u16) -> f64 {
        if self.is_degenerate() {
            return self.u_min;
        }
        let q = code.clamp(CODE_MIN, CODE_MAX);
        self.u_min + (q - CODE_MIN) as f64 * self.span() / CODE_SPAN
    }
}

/// Codes of an `N_X x (N_T+1)` field together with the range that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedField {
    codes: Array2<u16>,
    range: QuantRange,
}

impl QuantizedField {
    pub fn new(codes: Array2<u16>, range: QuantRange) -> Result<Self> {
        if let Some(c) = codes.iter().find(|c| !(CODE_MIN..=CODE_MAX).contains(*c)) {
            return Err(Error::invalid(format!("code {c} outside [{CODE_MIN}, {CODE_MAX}]")));
        }
        Ok(Self { codes, range })
    }

    pub fn codes(&self) -> &Array2<u16> {
        &self.codes
    }

    pub fn range(&self) -> QuantRange {
        self.range
    }

    pub fn n_space(&self) -> usize {
        self.codes.nrows()
    }

    pub fn n_slices(&self) -> usize {
        self.codes.ncols()
    }

    pub fn slice(&self, j: usize) -> Vec<u16> {
        self.codes.column(j).to_vec()
    }
}

/// Quantizes with the range taken over the whole matrix.
pub fn quantize(values: &Array2<f64>) -> Result<QuantizedField> {
    let range = QuantRange::of(values.iter())?;
    quantize_with(values, range)
}

/// Quantizes against a given range, saturating values that fall outside it.
pub fn quantize_with(values: &Array2<f64>, range: QuantRange) -> Result<QuantizedField> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot quantize non-finite values"));
    }
    QuantizedField::new(values.mapv(|u| range.encode(u)), range)
}

pub fn reconstruct(q: &QuantizedField) -> Array2<f64> {
    q.codes.mapv(|c| q.range.decode(c))
}

/// Per-step error of the quantize-reconstruct round trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorStep {
    pub rmse: f64,
    pub max_ae: f64,
}

/// Unavoidable error of any prediction restricted to the code lattice,
/// per column, with the range taken over the whole field.
pub fn quantization_floor(values: &Array2<f64>) -> Result<Vec<FloorStep>> {
    let q = quantize(values)?;
    let rec = reconstruct(&q);
    Ok(values
        .columns()
        .into_iter()
        .zip(rec.columns())
        .map(|(u, r)| {
            let n = u.len() as f64;
            let mut sq = 0.0;
            let mut max = 0.0f64;
            for (a, b) in u.iter().zip(r.iter()) {
                let e = (a - b).abs();
                sq += e * e;
                max = max.max(e);
            }
            FloorStep {
                rmse: (sq / n).sqrt(),
                max_ae: max,
            }
        })
        .collect())
}

/// Forward differences of codes in time.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalDifferences {
    pub diffs: Array2<i32>,
    /// Fraction of zero entries; 1.0 means nothing evolves at code resolution.
    pub zero_fraction: f64,
}

pub fn temporal_differences(q: &QuantizedField) -> Result<TemporalDifferences> {
    let (n, cols) = q.codes.dim();
    if cols < 2 {
        return Err(Error::invalid("temporal differences need at least two time levels"));
    }
    let diffs = Array2::from_shape_fn((n, cols - 1), |(i, j)| {
        q.codes[[i, j + 1]] as i32 - q.codes[[i, j]] as i32
    });
    let zeros = diffs.iter().filter(|d| **d == 0).count();
    let zero_fraction = if diffs.is_empty() { 1.0 } else { zeros as f64 / diffs.len() as f64 };
    Ok(TemporalDifferences { diffs, zero_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn r(lo: f64, hi: f64) -> QuantRange {
        QuantRange::new(lo, hi).unwrap()
    }

    #[test]
    fn affine_endpoints_and_midpoint() {
        let q = r(-1.0, 1.0);
        assert_eq!(q.encode(-1.0), 150);
        assert_eq!(q.encode(1.0), 850);
        assert_eq!(q.encode(0.0), 500);
        assert_eq!(r(0.0, 700.0).encode(351.0), 501);
    }

    #[test]
    fn constant_field_maps_to_500() {
        let u = Array2::from_elem((4, 3), 3.0);
        let q = quantize(&u).unwrap();
        assert!(q.codes().iter().all(|c| *c == 500));
        assert!(reconstruct(&q).iter().all(|v| *v == 3.0));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(quantize(&array![[1.0, f64::NAN]]).is_err());
        assert!(quantize(&array![[f64::INFINITY]]).is_err());
        assert!(QuantRange::new(1.0, 0.0).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(r(-1.0, 1.0).decode(500), 0.0);
        assert_eq!(r(0.0, 7.0).decode(850), 7.0);
        assert_eq!(r(0.0, 7.0).decode(999), 7.0);
        assert_eq!(r(0.0, 7.0).decode(3), 0.0);
    }

    #[test]
    fn round_trip_random_values_within_half_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut u = Array2::from_shape_fn((1000, 1), |_| rng.random_range(-1.0..=1.0));
        u[[0, 0]] = -1.0;
        u[[1, 0]] = 1.0;
        let rec = reconstruct(&quantize(&u).unwrap());
        let max = u.iter().zip(rec.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // range 2 gives a half step of 2 / 1400
        assert!(max <= 1.0 / 700.0 + 1e-12, "{max}");
        assert!(max > 0.9 / 700.0);
    }

    #[test]
    fn floor_is_zero_on_lattice_and_constant_fields() {
        let lattice = Array2::from_shape_fn((8, 3), |(i, j)| (i * 50 + j * 100) as f64);
        let lattice = {
            let mut m = lattice;
            m[[0, 0]] = 0.0;
            m[[7, 2]] = 700.0;
            m
        };
        assert!(quantization_floor(&lattice).unwrap().iter().all(|f| f.rmse == 0.0 && f.max_ae == 0.0));
        let flat = Array2::from_elem((5, 4), -0.25);
        assert!(quantization_floor(&flat).unwrap().iter().all(|f| f.max_ae == 0.0));
    }

    #[test]
    fn floor_bounded_by_half_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut u = Array2::from_shape_fn((40, 30), |_| rng.random_range(-1.0..1.0));
        u[[0, 0]] = -1.0;
        u[[1, 1]] = 1.0;
        // brute-force maximum over all entries
        let rec = reconstruct(&quantize(&u).unwrap());
        for (j, f) in quantization_floor(&u).unwrap().iter().enumerate() {
            let brute = (0..40).map(|i| (u[[i, j]] - rec[[i, j]]).abs()).fold(0.0, f64::max);
            assert_eq!(f.max_ae, brute);
            assert!(f.max_ae <= 2.0 / 1400.0 + 1e-12);
            assert!(f.rmse <= f.max_ae);
        }
    }

    #[test]
    fn temporal_differences_examples() {
        let flat = quantize(&Array2::from_shape_fn((3, 4), |(i, _)| i as f64)).unwrap();
        let d = temporal_differences(&flat).unwrap();
        assert_eq!(d.diffs.dim(), (3, 3));
        assert!(d.diffs.iter().all(|v| *v == 0));
        assert_eq!(d.zero_fraction, 1.0);

        let rising = quantize(&Array2::from_shape_fn((3, 6), |(i, j)| (i + j * j) as f64)).unwrap();
        assert!(temporal_differences(&rising).unwrap().diffs.iter().all(|v| *v >= 0));

        let single = quantize(&Array2::zeros((3, 1))).unwrap();
        assert!(temporal_differences(&single).is_err());
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(mut xs in proptest::collection::vec(-1e3f64..1e3, 2..60)) {
            let u = Array2::from_shape_vec((xs.len(), 1), xs.clone()).unwrap();
            let q = quantize(&u).unwrap();
            let mut pairs: Vec<(f64, u16)> = xs.drain(..).zip(q.codes().iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pairs.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
        }

        #[test]
        fn reconstruction_within_half_step(
            xs in proptest::collection::vec(-50.0f64..50.0, 1..80),
            cols in 1usize..4,
        ) {
            let rows = xs.len().div_ceil(cols);
            let u = Array2::from_shape_fn((rows, cols), |(i, j)| xs[(i * cols + j) % xs.len()]);
            let q = quantize(&u).unwrap();
            let bound = q.range().span() / 1400.0 + 1e-12;
            let rec = reconstruct(&q);
            for (a, b) in u.iter().zip(rec.iter()) {
                prop_assert!((a - b).abs() <= bound);
            }
            prop_assert!(q.codes().iter().all(|c| (150..=850).contains(c)));
        }
    }
}
