use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Per-utterance, per-coefficient mean and variance normalization.
/// Variance is floored at 1e-10 before the square root.
pub fn cmvn(feat: &FeatureMatrix) -> Result<FeatureMatrix> {
    let t = feat.frames();
    if t < 2 {
        return Err(Error::InsufficientFrames { need: 2, got: t });
    }
    let d = feat.dim();
    let mean = feat.mean();
    let mut var = vec![0.0f64; d];
    for r in feat.rows() {
        for ((v, &x), m) in var.iter_mut().zip(r).zip(&mean) {
            let c = x as f64 - m;
            *v += c * c;
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v / t as f64).max(1e-10).sqrt()).collect();
    let data = feat
        .rows()
        .flat_map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&inv_std)
                .map(|((&x, m), s)| ((x as f64 - m) * s) as f32)
                .collect::<Vec<_>>()
        })
        .collect();
    feat.with_data(data)
}
