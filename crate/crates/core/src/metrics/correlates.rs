use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::entropy::DistributionRecord;
use crate::error::{Error, Result};

/// Pointwise error together with local properties of the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelateRecord {
    pub i: usize,
    pub j: usize,
    pub abs_error: f64,
    pub value: f64,
    pub abs_dudx: f64,
    pub abs_dudt: f64,
}

/// Central differences inside, one-sided at both ends.
fn gradient(field: &Array2<f64>, axis: Axis, h: f64) -> Array2<f64> {
    let n = field.len_of(axis);
    let mut out = Array2::zeros(field.dim());
    for (mut dst, src) in out.lanes_mut(axis).into_iter().zip(field.lanes(axis)) {
        for k in 0..n {
            dst[k] = if k == 0 {
                (src[1] - src[0]) / h
            } else if k == n - 1 {
                (src[n - 1] - src[n - 2]) / h
            } else {
                (src[k + 1] - src[k - 1]) / (2.0 * h)
            };
        }
    }
    out
}

/// One record per entry of the prediction window, derivatives taken on the
/// prediction itself.
pub fn error_correlates(predicted: &Array2<f64>, reference: &Array2<f64>, dx: f64, dt: f64) -> Result<Vec<CorrelateRecord>> {
    if predicted.dim() != reference.dim() {
        return Err(Error::ShapeMismatch(format!(
            "predicted {:?} vs reference {:?}",
            predicted.dim(),
            reference.dim()
        )));
    }
    let (n, m) = predicted.dim();
    if n < 2 || m < 2 {
        return Err(Error::invalid("error correlates need at least two points and two steps"));
    }
    let ux = gradient(predicted, Axis(0), dx);
    let ut = gradient(predicted, Axis(1), dt);
    let mut out = Vec::with_capacity(n * m);
    for j in 0..m {
        for i in 0..n {
            out.push(CorrelateRecord {
                i,
                j,
                abs_error: (predicted[[i, j]] - reference[[i, j]]).abs(),
                value: predicted[[i, j]],
                abs_dudx: ux[[i, j]].abs(),
                abs_dudt: ut[[i, j]].abs(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub position: usize,
    pub separator: bool,
    pub entries: Vec<(String, f64)>,
}

/// The `k` most probable tokens per position, descending, without padding.
pub fn topk_table(records: &[DistributionRecord], k: usize) -> Vec<TopKRow> {
    let mut rows: BTreeMap<(bool, usize), TopKRow> = BTreeMap::new();
    for r in records {
        let mut entries = r.distribution.top.clone();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(k.max(1));
        rows.insert(
            (r.separator, r.position),
            TopKRow {
                position: r.position,
                separator: r.separator,
                entries,
            },
        );
    }
    rows.into_values().collect()
}
