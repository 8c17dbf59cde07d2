//! Per-figure CSV tables. Metric figures are pure functions of `metrics.csv`;
//! the diagnostic figures read one record of `records.jsonl`.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use ndarray::Array2;
use pdecast_core::codec::{parse, quantize_with, temporal_differences};
use pdecast_core::experiments::TrialRecord;
use pdecast_core::metrics::{error_correlates, loglog_slope, topk_table, MetricRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    ErrorVsNt,
    ErrorVsNx,
    RolloutError,
    EntropyVsNt,
    EntropyVsNx,
    EntropyVsStep,
    DeltaE,
    TemporalDiff,
    ErrorCorrelates,
    Topk,
}

impl Figure {
    pub fn reads_records(self) -> bool {
        matches!(self, Self::TemporalDiff | Self::ErrorCorrelates | Self::Topk)
    }

    /// Axis the figure is drawn against and the metric prefixes it keeps.
    fn metric_view(self) -> Option<(&'static str, &'static [&'static str])> {
        const ERRORS: &[&str] = &["rmse:", "floor_rmse"];
        Some(match self {
            Self::ErrorVsNt => ("N_T", ERRORS),
            Self::ErrorVsNx => ("N_X", ERRORS),
            Self::RolloutError => ("step", ERRORS),
            Self::EntropyVsNt => ("N_T", &["entropy:"]),
            Self::EntropyVsNx => ("N_X", &["entropy:"]),
            Self::EntropyVsStep => ("step", &["entropy:"]),
            Self::DeltaE => ("step", &["delta_e:"]),
            _ => return None,
        })
    }
}

/// A header plus string rows, written as CSV by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rows of a metric figure. `metric` narrows the selection to names starting
/// with it; per-IC rows are kept only when asked for explicitly.
pub fn metric_figure(figure: Figure, rows: &[MetricRow], metric: Option<&str>) -> Result<Table> {
    let (axis, prefixes) = figure
        .metric_view()
        .ok_or_else(|| anyhow!("{figure:?} is built from records.jsonl, not metrics.csv"))?;
    let keep = |m: &str| match metric {
        Some(p) => m.starts_with(p),
        None => prefixes.iter().any(|p| m.starts_with(p)) && !m.contains('@'),
    };
    let selected: Vec<&MetricRow> = rows.iter().filter(|r| r.axis == axis && keep(&r.metric)).collect();
    if selected.is_empty() {
        bail!("metrics.csv has no rows for {figure:?} (axis {axis})");
    }
    let slopes = (figure == Figure::RolloutError).then(|| {
        let mut by_metric: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in &selected {
            let e = by_metric.entry(&r.metric).or_default();
            e.0.push(r.axis_value);
            e.1.push(r.mean);
        }
        by_metric
            .into_iter()
            .map(|(m, (x, y))| (m, loglog_slope(&x, &y).map(|f| f.slope).unwrap_or(f64::NAN)))
            .collect::<BTreeMap<_, _>>()
    });

    let mut header = vec![axis, "N_Tokens", "metric", "mean", "ci_lo", "ci_hi", "M_effective", "scale"];
    if slopes.is_some() {
        header.push("slope");
    }
    let mut table = Table::new(&header);
    for r in selected {
        let mut row = vec![
            r.axis_value.to_string(),
            r.token_count.to_string(),
            r.metric.clone(),
            r.mean.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.m_effective.to_string(),
            r.scale.clone(),
        ];
        if let Some(s) = &slopes {
            row.push(s[r.metric.as_str()].to_string());
        }
        table.rows.push(row);
    }
    Ok(table)
}

/// Selects one record; `axis_value` defaults to the first sweep point.
pub fn select<'a>(
    records: &'a [TrialRecord],
    axis_value: Option<usize>,
    trial: usize,
    generation: usize,
) -> Result<&'a TrialRecord> {
    let axis_value = match axis_value {
        Some(v) => v,
        None => records.first().ok_or_else(|| anyhow!("records.jsonl is empty"))?.axis_value,
    };
    let r = records
        .iter()
        .find(|r| r.key() == (axis_value, trial, generation))
        .ok_or_else(|| anyhow!("no record for axis value {axis_value}, trial {trial}, generation {generation}"))?;
    if !r.is_ok() {
        bail!("record {:?} is a failed trial", r.key());
    }
    Ok(r)
}

fn columns(cols: &[Vec<f64>]) -> Array2<f64> {
    let n = cols.first().map_or(0, Vec::len);
    Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j][i])
}

/// Code differences `Q[i, j+1] - Q[i, j]` over the context and the reference
/// targets of a record. The context is re-read from its prompt dump.
pub fn temporal_diff(record: &TrialRecord, run_dir: &Path) -> Result<Table> {
    let prompt_file = record
        .prompt_file
        .as_ref()
        .ok_or_else(|| anyhow!("record has no prompt dump"))?;
    let prompt = std::fs::read_to_string(run_dir.join(prompt_file))
        .with_context(|| format!("reading {prompt_file}"))?;
    let report = parse(&prompt, record.n_x);
    let mut slices: Vec<Vec<f64>> = report
        .complete_slices()
        .map(|s| s.iter().map(|c| record.range.decode(*c)).collect())
        .collect();
    slices.extend(record.reference.iter().cloned());
    let q = quantize_with(&columns(&slices), record.range)?;
    let d = temporal_differences(&q)?;
    let mut table = Table::new(&["i", "j", "diff", "zero_fraction"]);
    for ((i, j), v) in d.diffs.indexed_iter() {
        table
            .rows
            .push(vec![(i + 1).to_string(), j.to_string(), v.to_string(), d.zero_fraction.to_string()]);
    }
    Ok(table)
}

/// Error against magnitude, value and derivative of the prediction, one row
/// per (node, predicted level).
pub fn error_correlate_table(record: &TrialRecord) -> Result<Table> {
    let c = error_correlates(&columns(&record.predicted), &columns(&record.reference), record.dx, record.dt)?;
    let mut table = Table::new(&["i", "level", "abs_error", "value", "abs_dudx", "abs_dudt"]);
    for c in c {
        table.rows.push(vec![
            (c.i + 1).to_string(),
            record.target_levels[c.j].to_string(),
            c.abs_error.to_string(),
            c.value.to_string(),
            c.abs_dudx.to_string(),
            c.abs_dudt.to_string(),
        ]);
    }
    Ok(table)
}

/// Top-`k` tokens per generated position of one predicted slice.
pub fn topk(record: &TrialRecord, step: usize, k: usize) -> Result<Table> {
    let dists = record
        .distributions
        .get(step)
        .ok_or_else(|| anyhow!("record has {} predicted slices", record.distributions.len()))?;
    let mut table = Table::new(&["position", "separator", "rank", "token", "probability"]);
    for row in topk_table(dists, k) {
        for (rank, (token, p)) in row.entries.iter().enumerate() {
            table.rows.push(vec![
                row.position.to_string(),
                row.separator.to_string(),
                (rank + 1).to_string(),
                token.clone(),
                p.to_string(),
            ]);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(axis: &str, at: f64, metric: &str, mean: f64) -> MetricRow {
        MetricRow {
            run_id: "r".into(),
            axis: axis.into(),
            axis_value: at,
            token_count: 27 * at as usize,
            metric: metric.into(),
            mean,
            ci_lo: mean / 2.0,
            ci_hi: mean * 2.0,
            m_effective: 5,
            scale: "log10".into(),
        }
    }

    #[test]
    fn rollout_slope_column() {
        let rows: Vec<MetricRow> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .flat_map(|&n| {
                vec![
                    row("step", n, "rmse:backend", 0.01 * n * n),
                    row("step", n, "rmse:FTCS", 0.02),
                    row("step", n, "rmse:backend@ic0", 1.0),
                    row("step", n, "entropy:backend", 0.3),
                ]
            })
            .collect();
        let t = metric_figure(Figure::RolloutError, &rows, None).unwrap();
        assert_eq!(t.header.last().unwrap(), "slope");
        assert_eq!(t.rows.len(), 8);
        let slope = |m: &str| -> f64 { t.rows.iter().find(|r| r[2] == m).unwrap()[8].parse().unwrap() };
        assert!((slope("rmse:backend") - 2.0).abs() < 1e-12);
        assert_eq!(slope("rmse:FTCS"), 0.0);
        let per_ic = metric_figure(Figure::RolloutError, &rows, Some("rmse:backend@ic0")).unwrap();
        assert_eq!(per_ic.rows.len(), 4);
    }

    #[test]
    fn figures_filter_by_axis() {
        let rows = vec![row("N_T", 2.0, "rmse:backend", 0.1), row("N_T", 2.0, "entropy:backend", 0.5)];
        let t = metric_figure(Figure::ErrorVsNt, &rows, None).unwrap();
        assert_eq!(t.header[0], "N_T");
        assert_eq!(t.rows.len(), 1);
        assert!(metric_figure(Figure::ErrorVsNx, &rows, None).is_err());
        assert_eq!(metric_figure(Figure::EntropyVsNt, &rows, None).unwrap().rows[0][2], "entropy:backend");
        assert!(metric_figure(Figure::Topk, &rows, None).is_err());
    }

    #[test]
    fn pure_function_of_rows() {
        let rows = vec![row("N_X", 4.0, "rmse:backend", 0.1), row("N_X", 2.0, "floor_rmse", 0.01)];
        let a = metric_figure(Figure::ErrorVsNx, &rows, None).unwrap();
        let b = metric_figure(Figure::ErrorVsNx, &rows.clone(), None).unwrap();
        assert_eq!(a, b);
    }
}
