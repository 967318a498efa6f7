use std::collections::BTreeMap;

use super::LayerGrad;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Mat, Real, Tensor};

fn check<T: Real>(input: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [n, d_in] = input.dims2("affine input")?;
    let [w_in, d_out] = w.dims2("affine W")?;
    if w_in != d_in || b.shape() != [d_out] {
        return Err(Error::dim(
            "affine",
            format!("x {:?}, W {:?}, b {:?}", input.shape(), w.shape(), b.shape()),
        ));
    }
    Ok((n, d_in, d_out))
}

/// `y = x W + b` for each row of `x: [N, D_in]`; `W: [D_in, D_out]`.
pub fn affine<T: Real>(input: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d_in, d_out) = check(input, w, b)?;
    let mut out = Tensor::zeros(&[n, d_out]);
    for row in out.data_mut().chunks_mut(d_out) {
        row.copy_from_slice(b.data());
    }
    gemm(n, d_in, d_out, T::one(), Mat::N(input.data()), Mat::N(w.data()), T::one(), out.data_mut());
    Ok(out)
}

/// Gradients keyed `W` and `b`.
pub fn affine_backward<T: Real>(
    input: &Tensor<T>,
    w: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    let [n, d_in] = input.dims2("affine input")?;
    let [_, d_o] = w.dims2("affine W")?;
    if d_out.shape() != [n, d_o] {
        return Err(Error::dim("affine backward", format!("d_out {:?}", d_out.shape())));
    }
    let mut dw = Tensor::zeros(w.shape());
    gemm(d_in, n, d_o, T::one(), Mat::T(input.data()), Mat::N(d_out.data()), T::zero(), dw.data_mut());
    let mut db = Tensor::zeros(&[d_o]);
    for row in d_out.data().chunks(d_o) {
        for (a, &v) in db.data_mut().iter_mut().zip(row) {
            *a += v;
        }
    }
    let mut d_input = Tensor::zeros(input.shape());
    gemm(n, d_o, d_in, T::one(), Mat::N(d_out.data()), Mat::T(w.data()), T::zero(), d_input.data_mut());
    let mut d_params = BTreeMap::new();
    d_params.insert("W".to_string(), dw);
    d_params.insert("b".to_string(), db);
    Ok(LayerGrad { d_input, d_params })
}
