use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Norms at or below this cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

/// Scales `x` to unit Euclidean norm.
pub fn l2_normalize<T: Real>(x: &[T]) -> Result<Vec<T>> {
    let norm = x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
    if norm <= MIN_NORM || !norm.is_finite() {
        return Err(Error::DegenerateEmbedding { norm });
    }
    Ok(x.iter().map(|&v| T::of(v.as_f64() / norm)).collect())
}

/// Row-wise [`l2_normalize`] over `[N, D]`. Returns the outputs and the
/// input norms for the backward pass.
pub fn l2_normalize_rows<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
    let [_, d] = x.dims2("l2_normalize")?;
    let mut out = Vec::with_capacity(x.len());
    let mut norms = Vec::new();
    for row in x.data().chunks(d) {
        let norm = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        out.extend(l2_normalize(row)?);
        norms.push(T::of(norm));
    }
    Ok((Tensor::from_vec(x.shape(), out)?, norms))
}

/// Applies the projection Jacobian `(I - y y^T) / |x|` row by row.
pub fn l2_normalize_backward<T: Real>(
    y: &Tensor<T>,
    norms: &[T],
    d_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    y.same_shape(d_out, "l2_normalize backward")?;
    let [_, d] = y.dims2("l2_normalize backward")?;
    let mut out = Vec::with_capacity(y.len());
    for ((yr, gr), &n) in y.data().chunks(d).zip(d_out.data().chunks(d)).zip(norms) {
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        out.extend(yr.iter().zip(gr).map(|(&a, &g)| (g - a * dot) / n));
    }
    Tensor::from_vec(y.shape(), out)
}
