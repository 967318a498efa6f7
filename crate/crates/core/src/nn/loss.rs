//! Scoring and loss functions: cosine similarity, softmax cross-entropy and
//! the cosine triplet hinge.

use crate::error::{Error, Result};
use crate::tensor::Real;

/// How far from 1 an input norm may drift before cosine scoring refuses it.
pub const UNIT_NORM_TOL: f64 = 1e-4;

fn check_unit<T: Real>(x: &[T], which: &str) -> Result<()> {
    let n = x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Contract(format!(
            "cosine_similarity: {which} has norm {n}, expected unit norm"
        )));
    }
    Ok(())
}

/// `x_i^T x_j` for unit-norm embeddings.
pub fn cosine_similarity<T: Real>(xi: &[T], xj: &[T]) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(Error::dim(
            "cosine_similarity",
            format!("{} vs {}", xi.len(), xj.len()),
        ));
    }
    check_unit(xi, "lhs")?;
    check_unit(xj, "rhs")?;
    Ok(dot(xi, xj))
}

/// Plain dot product accumulated in f64. No norm checks.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.as_f64() * y.as_f64()).sum()
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn softmax_xent<T: Real>(logits: &[T], label: usize) -> Result<(f64, Vec<T>)> {
    let k = logits.len();
    if k < 2 {
        return Err(Error::dim("softmax_xent", format!("need at least 2 classes, got {k}")));
    }
    if label >= k {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let max = logits.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(logits[label].as_f64() - max - sum.ln());
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, e)| T::of(e / sum - if i == label { 1.0 } else { 0.0 }))
        .collect();
    Ok((loss, grad))
}

/// `[s_an - s_ap + alpha]_+`.
pub fn triplet_loss(s_ap: f64, s_an: f64, alpha: f64) -> f64 {
    (s_an - s_ap + alpha).max(0.0)
}

/// Subgradient `(d/ds_ap, d/ds_an)`; zero at the hinge point.
pub fn triplet_loss_grad(s_ap: f64, s_an: f64, alpha: f64) -> (f64, f64) {
    if s_an - s_ap + alpha > 0.0 {
        (-1.0, 1.0)
    } else {
        (0.0, 0.0)
    }
}
