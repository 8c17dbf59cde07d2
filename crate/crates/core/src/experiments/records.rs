use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{OodFlag, QuantRange};
use crate::error::{Error, Result};
use crate::grid_ic::{IcRecord, IcSeed};
use crate::metrics::{DistributionRecord, EntropyValue};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed { reason: String },
}

/// Per generated slice parse diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceDiagnostics {
    pub attempts: usize,
    pub ood: Vec<OodFlag>,
    pub short_groups: usize,
    pub raw_tail: String,
    pub aligned: bool,
}

/// Relative energy deviation (percent) at every predicted level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub e0: f64,
    pub backend: Vec<f64>,
    /// Refined solution restricted to the coarse grid.
    pub reference: Vec<f64>,
    pub baselines: BTreeMap<String, Vec<f64>>,
}

/// Everything produced by one (sweep point, trial, generation) unit. Field
/// matrices are stored per predicted level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub axis_value: usize,
    pub trial: usize,
    pub generation: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub context_steps: usize,
    pub target_levels: Vec<usize>,
    pub seed: IcSeed,
    pub ic: IcRecord,
    pub ic_fingerprint: String,
    pub range: QuantRange,
    pub dx: f64,
    pub dt: f64,
    #[serde(flatten)]
    pub status: TrialStatus,
    /// Backend output reconstructed from its codes.
    pub predicted: Vec<Vec<f64>>,
    pub predicted_codes: Vec<Vec<u16>>,
    /// Quantized-then-reconstructed reference.
    pub reference: Vec<Vec<f64>>,
    /// Reference before quantization.
    pub reference_exact: Vec<Vec<f64>>,
    pub baselines: BTreeMap<String, Vec<Vec<f64>>>,
    pub baseline_failures: BTreeMap<String, String>,
    pub entropy: Vec<Option<EntropyValue>>,
    pub distributions: Vec<Vec<DistributionRecord>>,
    pub diagnostics: Vec<SliceDiagnostics>,
    pub energy: Option<EnergyRecord>,
    pub prompt_file: Option<String>,
    pub wall_clock_ms: u64,
}

/// Ordering and resume key of a record.
pub type RecordKey = (usize, usize, usize);

impl TrialRecord {
    pub fn key(&self) -> RecordKey {
        (self.axis_value, self.trial, self.generation)
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

/// Writes records sorted by key, one JSON object per line.
pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in sorted {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}
