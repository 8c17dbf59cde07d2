use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One aggregated metric at one sweep point; a row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    /// `N_T`, `N_X` or `step`.
    pub axis: String,
    pub axis_value: f64,
    pub token_count: usize,
    /// E.g. `rmse:oracle`, `maxae:FTCS`, `entropy:backend`, `floor_rmse`.
    pub metric: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub m_effective: usize,
    pub scale: String,
}

pub fn write_metrics_csv(rows: &[MetricRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("metrics.csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(input: impl Read) -> Result<Vec<MetricRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::invalid(format!("metrics.csv: {e}"))))
        .collect()
}
