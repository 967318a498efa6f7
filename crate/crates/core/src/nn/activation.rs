use crate::tensor::{Real, Tensor};

/// Ceiling of the clipped rectifier. Fixed, not configurable.
pub const RELU_CLIP: f64 = 20.0;

/// `min(max(x, 0), 20)` elementwise.
pub fn clipped_relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let clip = T::of(RELU_CLIP);
    x.map(|v| v.max(T::zero()).min(clip))
}

/// Passes the gradient through where the forward input was strictly inside
/// `(0, 20)`; zero elsewhere, including at the kinks.
pub fn clipped_relu_backward<T: Real>(x: &Tensor<T>, d_out: &Tensor<T>) -> Tensor<T> {
    let clip = T::of(RELU_CLIP);
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&v, &g)| if v > T::zero() && v < clip { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("shape preserved")
}
