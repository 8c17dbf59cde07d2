use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::pde::{PdeSpec, SchemeId};
use crate::error::{Error, Result};
use crate::grid_ic::{SpatialGrid, TimeGrid};

/// Interior solution values, rows = spatial nodes `1..=N_X`, columns = time
/// levels `0..=N_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    values: Array2<f64>,
    spatial: SpatialGrid,
    time: TimeGrid,
    pde: PdeSpec,
}

impl SolutionField {
    pub fn new(values: Array2<f64>, spatial: SpatialGrid, time: TimeGrid, pde: PdeSpec) -> Result<Self> {
        let want = (spatial.n_interior(), time.n_steps() + 1);
        if values.dim() != want {
            return Err(Error::ShapeMismatch(format!(
                "field is {:?}, grids imply {want:?}",
                values.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("solution field has non-finite entries"));
        }
        Ok(Self {
            values,
            spatial,
            time,
            pde,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn spatial(&self) -> &SpatialGrid {
        &self.spatial
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn pde(&self) -> &PdeSpec {
        &self.pde
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }

    /// CSV with a header row of time levels and the spatial coordinate in the
    /// first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x");
        for t in self.time.levels() {
            write!(out, ",{t}").unwrap();
        }
        out.push('\n');
        for (i, row) in self.values.rows().into_iter().enumerate() {
            write!(out, "{}", self.spatial.point(i + 1)).unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Key of a cached solve.
#[derive(Debug, Clone)]
pub struct CacheKey<'a> {
    pub pde: &'a PdeSpec,
    pub scheme: SchemeId,
    pub ic_fingerprint: &'a str,
    pub spatial: &'a SpatialGrid,
    pub time: &'a TimeGrid,
    pub refine: (usize, usize),
}

impl CacheKey<'_> {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self.pde).expect("pde serializes"));
        h.update(self.scheme.name().as_bytes());
        h.update(self.ic_fingerprint.as_bytes());
        h.update(serde_json::to_vec(self.spatial).expect("grid serializes"));
        h.update(serde_json::to_vec(self.time).expect("grid serializes"));
        h.update((self.refine.0 as u64).to_le_bytes());
        h.update((self.refine.1 as u64).to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Directory of raw little-endian solution matrices named by key digest.
#[derive(Debug, Clone)]
pub struct SolutionCache {
    dir: PathBuf,
}

impl SolutionCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, key: &CacheKey<'_>) -> PathBuf {
        self.dir.join(format!("{}.bin", key.digest()))
    }

    pub fn load(&self, key: &CacheKey<'_>) -> Result<Option<SolutionField>> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        let (rows, cols, data) = read_matrix(&path)?;
        let values = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::ShapeMismatch(format!("corrupt cache entry {}: {e}", path.display())))?;
        SolutionField::new(values, key.spatial.clone(), key.time.clone(), *key.pde).map(Some)
    }

    pub fn store(&self, key: &CacheKey<'_>, field: &SolutionField) -> Result<()> {
        let (rows, cols) = field.values.dim();
        let mut bytes = Vec::with_capacity(16 + 8 * rows * cols);
        bytes.extend_from_slice(&(rows as u64).to_le_bytes());
        bytes.extend_from_slice(&(cols as u64).to_le_bytes());
        for v in field.values.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        // unique per writer so concurrent stores of one key never interleave
        static WRITES: AtomicU64 = AtomicU64::new(0);
        let n = WRITES.fetch_add(1, Ordering::Relaxed);
        let tmp = self.path(key).with_extension(format!("{}.{n}.tmp", std::process::id()));
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, self.path(key))?;
        Ok(())
    }
}

fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let corrupt = || Error::invalid(format!("corrupt cache entry {}", path.display()));
    if bytes.len() < 16 {
        return Err(corrupt());
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + 8 * rows * cols {
        return Err(corrupt());
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}
