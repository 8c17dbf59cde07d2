//! Random spline initial conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::{BoundarySpec, SpatialGrid};
use super::spline::CubicSpline;
use crate::error::{Error, Result};

/// Seed plus stream index. Trial `m` of a run with base seed `s` draws from
/// ChaCha8 stream `m` of key `s`, so any subset of trials can be regenerated
/// independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IcSeed {
    pub seed: u64,
    pub stream: u64,
}

impl IcSeed {
    pub fn trial(base_seed: u64, trial: usize) -> Self {
        Self {
            seed: base_seed,
            stream: trial as u64,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Parameters of the random initial-condition family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcParams {
    pub half_width: f64,
    pub n_interior: usize,
    /// Lower bound of the interior draws.
    pub low: f64,
    /// Upper bound of the interior draws.
    pub high: f64,
}

impl IcParams {
    pub fn new(half_width: f64, n_interior: usize, low: f64, high: f64) -> Self {
        Self {
            half_width,
            n_interior,
            low,
            high,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite()) || self.low >= self.high {
            return Err(Error::invalid(format!(
                "need a < b for the interior draw range, got a = {}, b = {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Exact-replay export of a sampled initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcRecord {
    pub seed: u64,
    pub stream: u64,
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N_X")]
    pub n_interior: usize,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "u_BC")]
    pub boundary_value: f64,
    pub neumann: bool,
    /// All `N_X + 2` knot values, boundary knots included.
    pub knot_values: Vec<f64>,
}

/// A sampled initial condition `u0 = S(x)` on `[-L, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    record: IcRecord,
    spline: CubicSpline,
}

impl InitialCondition {
    pub fn from_record(record: IcRecord) -> Result<Self> {
        let grid = SpatialGrid::new(record.half_width, record.n_interior)?;
        if record.knot_values.len() != record.n_interior + 2 {
            return Err(Error::ShapeMismatch(format!(
                "IC record has {} knot values for N_X = {}",
                record.knot_values.len(),
                record.n_interior
            )));
        }
        let spline = CubicSpline::not_a_knot(&grid.points(), &record.knot_values)?;
        Ok(Self { record, spline })
    }

    pub fn record(&self) -> &IcRecord {
        &self.record
    }

    pub fn spline(&self) -> &CubicSpline {
        &self.spline
    }

    pub fn half_width(&self) -> f64 {
        self.record.half_width
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.spline.eval(x)
    }

    /// Hex SHA-256 of the knot data; equal hashes mean the same function.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.record.half_width.to_le_bytes());
        for v in &self.record.knot_values {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Draws `N_X` interior knot values i.i.d. uniform on `[a, b]`, pins both end
/// knots and fits a not-a-knot cubic spline through them.
///
/// For a Dirichlet boundary the end knots take the boundary value. Neumann
/// problems have no prescribed value, so the end knots are set to the midpoint
/// `(a + b) / 2`; the Neumann condition then acts on the evolution only.
pub fn sample_random_ic(seed: IcSeed, params: IcParams, boundary: BoundarySpec) -> Result<InitialCondition> {
    params.validate()?;
    boundary.validate()?;
    SpatialGrid::new(params.half_width, params.n_interior)?;
    let (u_bc, neumann) = match boundary {
        BoundarySpec::Dirichlet { value } => (value, false),
        BoundarySpec::NeumannHomogeneous => (0.5 * (params.low + params.high), true),
    };

    let mut rng = seed.rng();
    let width = params.high - params.low;
    let mut knot_values = Vec::with_capacity(params.n_interior + 2);
    knot_values.push(u_bc);
    for _ in 0..params.n_interior {
        let u: f64 = rng.random();
        knot_values.push(params.low + width * u);
    }
    knot_values.push(u_bc);

    InitialCondition::from_record(IcRecord {
        seed: seed.seed,
        stream: seed.stream,
        half_width: params.half_width,
        n_interior: params.n_interior,
        a: params.low,
        b: params.high,
        boundary_value: u_bc,
        neumann,
        knot_values,
    })
}

/// Samples the fixed spline on a uniform grid with `n_interior` interior
/// points. Returns `n_interior + 2` values; the end entries are the boundary
/// value (Dirichlet) or the spline's end knots (Neumann).
pub fn resample_ic(ic: &InitialCondition, n_interior: usize, boundary: BoundarySpec) -> Result<Vec<f64>> {
    let grid = SpatialGrid::new(ic.half_width(), n_interior)?;
    let (left, right) = match boundary {
        BoundarySpec::Dirichlet { value } => (value, value),
        BoundarySpec::NeumannHomogeneous => {
            let k = ic.spline.values();
            (k[0], k[k.len() - 1])
        }
    };
    let mut out = Vec::with_capacity(n_interior + 2);
    out.push(left);
    for x in grid.interior_points() {
        out.push(ic.eval(x)?);
    }
    out.push(right);
    Ok(out)
}

/// Something that can be sampled on `[-L, L]` to seed a solve.
pub trait Profile: Sync {
    fn value(&self, x: f64) -> f64;

    /// Values at the interior nodes of `grid`.
    fn sample_interior(&self, grid: &SpatialGrid) -> Vec<f64> {
        grid.interior_points().into_iter().map(|x| self.value(x)).collect()
    }
}

impl Profile for InitialCondition {
    fn value(&self, x: f64) -> f64 {
        // callers only sample nodes of grids on the spline's own domain
        let (lo, hi) = self.spline.domain();
        self.spline.eval(x.clamp(lo, hi)).expect("clamped abscissa is in domain")
    }
}

impl<F: Fn(f64) -> f64 + Sync> Profile for F {
    fn value(&self, x: f64) -> f64 {
        self(x)
    }
}
