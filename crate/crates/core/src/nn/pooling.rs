use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Mean over frames: `[B, T, D] -> [B, D]`.
pub fn temporal_average<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, t, d] = input.dims3("temporal_average")?;
    if t == 0 {
        return Err(Error::EmptyUtterance("temporal average over zero frames".into()));
    }
    let mut out = Tensor::zeros(&[b, d]);
    let x = input.data();
    for bi in 0..b {
        let acc = &mut out.data_mut()[bi * d..(bi + 1) * d];
        for ti in 0..t {
            let row = &x[(bi * t + ti) * d..(bi * t + ti + 1) * d];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let inv = T::one() / T::of(t as f64);
        for a in acc.iter_mut() {
            *a *= inv;
        }
    }
    Ok(out)
}

/// Spreads `d_out / T` to every frame.
pub fn temporal_average_backward<T: Real>(frames: usize, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, d] = d_out.dims2("temporal_average backward")?;
    if frames == 0 {
        return Err(Error::EmptyUtterance("temporal average over zero frames".into()));
    }
    let inv = T::one() / T::of(frames as f64);
    let mut out = Tensor::zeros(&[b, frames, d]);
    for bi in 0..b {
        let g = &d_out.data()[bi * d..(bi + 1) * d];
        for ti in 0..frames {
            let row = &mut out.data_mut()[(bi * frames + ti) * d..(bi * frames + ti + 1) * d];
            for (o, &v) in row.iter_mut().zip(g) {
                *o = v * inv;
            }
        }
    }
    Ok(out)
}
