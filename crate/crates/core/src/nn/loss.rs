use super::tensor::Tensor2;
use crate::error::{GeoqcError, Result};

fn check_shapes(pred: &[Tensor2], target: &[Tensor2]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(GeoqcError::DimensionMismatch {
            expected: target.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(GeoqcError::InvalidInput("empty sequence in loss".into()));
    }
    for (p, t) in pred.iter().zip(target) {
        if p.shape() != t.shape() {
            return Err(GeoqcError::DimensionMismatch {
                expected: t.rows() * t.cols(),
                found: p.rows() * p.cols(),
            });
        }
    }
    Ok(())
}

/// Squared Euclidean distance between timestep vectors, averaged over
/// timesteps and over the batch rows.
pub fn euclidean_loss_value(pred: &[Tensor2], target: &[Tensor2]) -> Result<f64> {
    check_shapes(pred, target)?;
    let denom = (pred.len() * pred[0].rows()) as f64;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            p.as_slice()
                .iter()
                .zip(t.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    Ok(total / denom)
}

/// Loss value and ∂L/∂pred.
pub fn euclidean_loss(pred: &[Tensor2], target: &[Tensor2]) -> Result<(f64, Vec<Tensor2>)> {
    let loss = euclidean_loss_value(pred, target)?;
    let scale = 2.0 / (pred.len() * pred[0].rows()) as f64;
    let grads = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let mut g = p.clone();
            for (gv, tv) in g.as_mut_slice().iter_mut().zip(t.as_slice()) {
                *gv = (*gv - tv) * scale;
            }
            g
        })
        .collect();
    Ok((loss, grads))
}
