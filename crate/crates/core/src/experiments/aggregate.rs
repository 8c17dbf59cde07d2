use std::collections::BTreeMap;

use super::config::MetricOptions;
use super::records::TrialRecord;
use crate::codec::token_count;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_ci, aggregate_preferring_log, maxae, rmse, Aggregate, MetricRow, Scale};

/// Sweep-point axis name of an experiment kind.
pub fn axis_name(experiment: &str) -> Result<&'static str> {
    match experiment {
        "context" => Ok("N_T"),
        "output" => Ok("N_X"),
        "multi_step" | "energy" => Ok("step"),
        other => Err(Error::invalid(format!("unknown experiment kind {other:?}"))),
    }
}

fn is_rollout(experiment: &str) -> bool {
    matches!(experiment, "multi_step" | "energy")
}

/// Values of one metric at one axis point, grouped by IC.
type Series = BTreeMap<(usize, String), BTreeMap<usize, Vec<f64>>>;

fn push(series: &mut Series, point: usize, metric: &str, trial: usize, value: f64) {
    series
        .entry((point, metric.to_string()))
        .or_default()
        .entry(trial)
        .or_default()
        .push(value);
}

fn linear(values: &[f64]) -> Result<Aggregate> {
    if values.len() == 1 {
        return Ok(Aggregate {
            mean: values[0],
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            count: 1,
            scale: Scale::Linear,
        });
    }
    aggregate_ci(values, Scale::Linear)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Errors scale multiplicatively and get log-scale intervals; entropy and
/// counts stay linear.
fn is_log_metric(metric: &str) -> bool {
    !(metric.starts_with("entropy") || metric == "failed_trials")
}

/// Checks that every sweep point of a trial was driven by the same IC.
fn check_isolation(records: &[TrialRecord]) -> Result<()> {
    let mut seen: BTreeMap<usize, &str> = BTreeMap::new();
    for r in records {
        match seen.get(&r.trial) {
            Some(fp) if *fp != r.ic_fingerprint => {
                return Err(Error::invalid(format!(
                    "trial {} uses different initial conditions across sweep points",
                    r.trial
                )))
            }
            _ => {
                seen.insert(r.trial, &r.ic_fingerprint);
            }
        }
    }
    Ok(())
}

/// Aggregates trial records into metric rows. Failed trials are excluded and
/// counted under `failed_trials`. Rollout metrics are averaged over the
/// generations of each IC before the interval is taken across ICs; per-IC
/// rows (`<metric>@ic<m>`) carry intervals across generations.
pub fn aggregate(run_id: &str, records: &[TrialRecord], options: MetricOptions) -> Result<Vec<MetricRow>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let experiment = first.experiment.as_str();
    if records.iter().any(|r| r.experiment != experiment) {
        return Err(Error::invalid("records mix experiment kinds"));
    }
    let axis = axis_name(experiment)?;
    let rollout = is_rollout(experiment);
    check_isolation(records)?;

    let mut series = Series::new();
    let mut per_ic = Series::new();
    let mut tokens: BTreeMap<usize, usize> = BTreeMap::new();
    let mut failures: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    // deterministic per IC quantities are scored once per (point, trial)
    let mut scored_once: std::collections::HashSet<(usize, usize)> = Default::default();
    let mut averaged: BTreeMap<usize, (Vec<Vec<f64>>, usize, &TrialRecord)> = BTreeMap::new();

    for r in records {
        let points: Vec<usize> = if rollout {
            (1..=r.target_levels.len()).collect()
        } else {
            vec![r.axis_value]
        };
        for (s, &point) in points.iter().enumerate() {
            let tc = match (experiment, rollout) {
                (_, true) => token_count(r.context_steps + s, r.n_x),
                ("output", _) => token_count(1, r.n_x),
                _ => token_count(r.n_t, r.n_x),
            };
            tokens.insert(point, tc);
            let f = failures.entry(point).or_default();
            f.1 += 1;
            if !r.is_ok() {
                f.0 += 1;
            }
        }
        if !r.is_ok() {
            continue;
        }
        let first_for_ic = scored_once.insert((r.axis_value, r.trial));
        for (s, &point) in points.iter().enumerate() {
            let reference = &r.reference[s];
            let pred = &r.predicted[s];
            if !(rollout && options.average_predictions) {
                let e = rmse(pred, reference)?;
                let a = maxae(pred, reference)?;
                push(&mut series, point, "rmse:backend", r.trial, e);
                push(&mut series, point, "maxae:backend", r.trial, a);
                if rollout {
                    push(&mut per_ic, point, &format!("rmse:backend@ic{}", r.trial), r.trial, e);
                    push(&mut per_ic, point, &format!("maxae:backend@ic{}", r.trial), r.trial, a);
                }
            }
            push(&mut series, point, "rmse_exact:backend", r.trial, rmse(pred, &r.reference_exact[s])?);
            if let Some(Some(h)) = r.entropy.get(s) {
                push(&mut series, point, "entropy:backend", r.trial, h.value);
            }
            if let Some(energy) = &r.energy {
                push(&mut series, point, "delta_e:backend", r.trial, energy.backend[s]);
            }
            if first_for_ic {
                push(&mut series, point, "floor_rmse", r.trial, rmse(&r.reference_exact[s], reference)?);
                push(&mut series, point, "floor_maxae", r.trial, maxae(&r.reference_exact[s], reference)?);
                for (name, cols) in &r.baselines {
                    push(&mut series, point, &format!("rmse:{name}"), r.trial, rmse(&cols[s], reference)?);
                    push(&mut series, point, &format!("maxae:{name}"), r.trial, maxae(&cols[s], reference)?);
                }
                if let Some(energy) = &r.energy {
                    push(&mut series, point, "delta_e:reference", r.trial, energy.reference[s]);
                    for (name, v) in &energy.baselines {
                        push(&mut series, point, &format!("delta_e:{name}"), r.trial, v[s]);
                    }
                }
            }
        }
        if rollout && options.average_predictions {
            let entry = averaged
                .entry(r.trial)
                .or_insert_with(|| (vec![vec![0.0; r.n_x]; r.predicted.len()], 0, r));
            for (acc, col) in entry.0.iter_mut().zip(&r.predicted) {
                acc.iter_mut().zip(col).for_each(|(a, v)| *a += v);
            }
            entry.1 += 1;
        }
    }
    for (trial, (sums, count, r)) in &averaged {
        for (s, col) in sums.iter().enumerate() {
            let avg: Vec<f64> = col.iter().map(|v| v / *count as f64).collect();
            push(&mut series, s + 1, "rmse:backend", *trial, rmse(&avg, &r.reference[s])?);
            push(&mut series, s + 1, "maxae:backend", *trial, maxae(&avg, &r.reference[s])?);
        }
    }

    let mut rows = Vec::new();
    let mut emit = |point: usize, metric: &str, values: &[f64]| -> Result<()> {
        let agg = if is_log_metric(metric) {
            aggregate_preferring_log(values)?
        } else {
            linear(values)?
        };
        rows.push(MetricRow {
            run_id: run_id.to_string(),
            axis: axis.to_string(),
            axis_value: point as f64,
            token_count: tokens[&point],
            metric: metric.to_string(),
            mean: agg.mean,
            ci_lo: agg.ci_lo,
            ci_hi: agg.ci_hi,
            m_effective: agg.count,
            scale: agg.scale.name().to_string(),
        });
        Ok(())
    };
    for ((point, metric), by_ic) in &series {
        let values: Vec<f64> = by_ic.values().map(|v| mean(v)).collect();
        emit(*point, metric, &values)?;
    }
    for ((point, metric), by_ic) in &per_ic {
        for values in by_ic.values() {
            emit(*point, metric, values)?;
        }
    }
    for (point, (failed, total)) in &failures {
        rows.push(MetricRow {
            run_id: run_id.to_string(),
            axis: axis.to_string(),
            axis_value: *point as f64,
            token_count: tokens[point],
            metric: "failed_trials".into(),
            mean: *failed as f64,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            m_effective: *total,
            scale: Scale::Linear.name().into(),
        });
    }
    rows.sort_by(|a, b| {
        a.metric
            .cmp(&b.metric)
            .then(a.axis_value.total_cmp(&b.axis_value))
    });
    Ok(rows)
}
