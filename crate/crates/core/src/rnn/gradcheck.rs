//! Central finite-difference check of [`super::backward`].
//!
//! Errors are measured per tensor as `‖a − n‖ / max(‖a‖, ‖n‖)` over the
//! analytic (`a`) and numeric (`n`) gradient of that tensor; element-wise
//! ratios are dominated by round-off wherever a gradient is near zero.

use super::{backward, bce, forward, LstmParams, RnnError, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorError {
    pub name: String,
    pub relative_error: f64,
    pub analytic_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub tensors: Vec<TensorError>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.relative_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorError> {
        self.tensors
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

/// Mean BCE of `batch` under `p`, dropout off.
pub fn batch_loss(p: &LstmParams, batch: &[Sample]) -> Result<f64, RnnError> {
    let mut total = 0.0;
    for s in batch {
        total += bce(forward(p, &s.x, &s.valid)?, s.label);
    }
    Ok(total / batch.len().max(1) as f64)
}

/// Compare analytic and central-difference gradients with step `h`.
pub fn check_gradients(p: &LstmParams, batch: &[Sample], h: f64) -> Result<GradCheck, RnnError> {
    let (_, analytic) = backward(p, batch, None)?;
    let mut numeric = vec![0.0; p.data.len()];
    let mut probe = p.clone();
    for i in 0..p.data.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let up = batch_loss(&probe, batch)?;
        probe.data[i] = orig - h;
        let down = batch_loss(&probe, batch)?;
        probe.data[i] = orig;
        numeric[i] = (up - down) / (2.0 * h);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tensors = p
        .tensors()
        .into_iter()
        .map(|(name, r)| {
            let a = &analytic[r.clone()];
            let n = &numeric[r];
            let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
            let scale = norm(a).max(norm(n));
            let relative_error = if scale == 0.0 { 0.0 } else { norm(&diff) / scale };
            TensorError {
                name,
                relative_error,
                analytic_norm: norm(a),
            }
        })
        .collect();
    Ok(GradCheck { tensors })
}
