use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

fn check(predicted: &Array2<f64>, reference: &Array2<f64>) -> Result<()> {
    if predicted.dim() != reference.dim() {
        return Err(Error::ShapeMismatch(format!(
            "predicted {:?} vs reference {:?}",
            predicted.dim(),
            reference.dim()
        )));
    }
    if predicted.nrows() == 0 {
        return Err(Error::invalid("fields have no spatial points"));
    }
    Ok(())
}

/// Root-mean-square error over space, one value per column.
pub fn rmse_per_step(predicted: &Array2<f64>, reference: &Array2<f64>) -> Result<Vec<f64>> {
    check(predicted, reference)?;
    let n = predicted.nrows() as f64;
    Ok(predicted
        .columns()
        .into_iter()
        .zip(reference.columns())
        .map(|(p, r)| {
            let mut sq = 0.0;
            Zip::from(&p).and(&r).for_each(|a, b| sq += (a - b) * (a - b));
            (sq / n).sqrt()
        })
        .collect())
}

/// Maximum absolute error over space, one value per column.
pub fn maxae_per_step(predicted: &Array2<f64>, reference: &Array2<f64>) -> Result<Vec<f64>> {
    check(predicted, reference)?;
    Ok(predicted
        .columns()
        .into_iter()
        .zip(reference.columns())
        .map(|(p, r)| p.iter().zip(r.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect())
}

/// RMSE of a single slice.
pub fn rmse(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    let p = Array2::from_shape_vec((predicted.len(), 1), predicted.to_vec()).map_err(|e| Error::invalid(e.to_string()))?;
    let r = Array2::from_shape_vec((reference.len(), 1), reference.to_vec()).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(rmse_per_step(&p, &r)?[0])
}

/// MaxAE of a single slice.
pub fn maxae(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    let p = Array2::from_shape_vec((predicted.len(), 1), predicted.to_vec()).map_err(|e| Error::invalid(e.to_string()))?;
    let r = Array2::from_shape_vec((reference.len(), 1), reference.to_vec()).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(maxae_per_step(&p, &r)?[0])
}
