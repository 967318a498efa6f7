//! Forward-only GRU layer with backpropagation through time.
//!
//! ```text
//! z_t = sigmoid(x_t W_z + h_{t-1} U_z + b_z)
//! r_t = sigmoid(x_t W_r + h_{t-1} U_r + b_r)
//! c_t = tanh(x_t W_h + (r_t * h_{t-1}) U_h + b_h)
//! h_t = (1 - z_t) * h_{t-1} + z_t * c_t
//! ```
//!
//! One bias vector per gate. Input is `[B, T, D]`, output `[B, T, H]`.

use std::collections::BTreeMap;

use super::LayerGrad;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Mat, Real, Tensor};

pub const GATES: [&str; 3] = ["z", "r", "h"];

/// `w[g]` is `[D, H]`, `u[g]` is `[H, H]`, `b[g]` is `[H]`, gates ordered z, r, h.
#[derive(Clone, Copy)]
pub struct GruParams<'a, T: Real> {
    pub w: [&'a Tensor<T>; 3],
    pub u: [&'a Tensor<T>; 3],
    pub b: [&'a Tensor<T>; 3],
}

impl<T: Real> GruParams<'_, T> {
    fn dims(&self) -> Result<(usize, usize)> {
        let [d, h] = self.w[0].dims2("gru W")?;
        for g in 0..3 {
            if self.w[g].shape() != [d, h] || self.u[g].shape() != [h, h] || self.b[g].shape() != [h] {
                return Err(Error::dim(
                    "gru",
                    format!(
                        "gate {}: W {:?}, U {:?}, b {:?} inconsistent with D={d}, H={h}",
                        GATES[g],
                        self.w[g].shape(),
                        self.u[g].shape(),
                        self.b[g].shape()
                    ),
                ));
            }
        }
        Ok((d, h))
    }
}

#[derive(Clone, Debug)]
pub struct GruCache<T: Real> {
    dims: [usize; 4],
    input: Tensor<T>,
    h0: Vec<T>,
    /// Per time step, `[B, H]` each, stored `[T][B*H]`.
    z: Vec<Vec<T>>,
    r: Vec<Vec<T>>,
    c: Vec<Vec<T>>,
    h: Vec<Vec<T>>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Runs the layer. `h0` defaults to zeros.
pub fn forward<T: Real>(
    input: &Tensor<T>,
    p: GruParams<'_, T>,
    h0: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, GruCache<T>)> {
    let [b, t, d_in] = input.dims3("gru input")?;
    let (d, h) = p.dims()?;
    if d_in != d {
        return Err(Error::dim("gru", format!("input width {d_in} != W rows {d}")));
    }
    let h_init = match h0 {
        Some(s) if s.shape() == [b, h] => s.data().to_vec(),
        Some(s) => {
            return Err(Error::dim("gru", format!("h0 {:?} != [{b}, {h}]", s.shape())));
        }
        None => vec![T::zero(); b * h],
    };

    // Input projections for all frames at once: [B*T, H] per gate.
    let proj: Vec<Vec<T>> = (0..3)
        .map(|g| {
            let mut out = vec![T::zero(); b * t * h];
            gemm(b * t, d, h, T::one(), Mat::N(input.data()), Mat::N(p.w[g].data()), T::zero(), &mut out);
            out
        })
        .collect();

    let mut cache = GruCache {
        dims: [b, t, d, h],
        input: input.clone(),
        h0: h_init.clone(),
        z: Vec::with_capacity(t),
        r: Vec::with_capacity(t),
        c: Vec::with_capacity(t),
        h: Vec::with_capacity(t),
    };
    let mut out = Tensor::zeros(&[b, t, h]);
    let mut h_prev = h_init;
    let mut hu_z = vec![T::zero(); b * h];
    let mut hu_r = vec![T::zero(); b * h];
    let mut hu_h = vec![T::zero(); b * h];
    for step in 0..t {
        gemm(b, h, h, T::one(), Mat::N(&h_prev), Mat::N(p.u[0].data()), T::zero(), &mut hu_z);
        gemm(b, h, h, T::one(), Mat::N(&h_prev), Mat::N(p.u[1].data()), T::zero(), &mut hu_r);
        let mut z = vec![T::zero(); b * h];
        let mut r = vec![T::zero(); b * h];
        let mut rh = vec![T::zero(); b * h];
        for bi in 0..b {
            let row = (bi * t + step) * h;
            for j in 0..h {
                let i = bi * h + j;
                z[i] = sigmoid(proj[0][row + j] + hu_z[i] + p.b[0][j]);
                r[i] = sigmoid(proj[1][row + j] + hu_r[i] + p.b[1][j]);
                rh[i] = r[i] * h_prev[i];
            }
        }
        gemm(b, h, h, T::one(), Mat::N(&rh), Mat::N(p.u[2].data()), T::zero(), &mut hu_h);
        let mut c = vec![T::zero(); b * h];
        let mut h_new = vec![T::zero(); b * h];
        for bi in 0..b {
            let row = (bi * t + step) * h;
            for j in 0..h {
                let i = bi * h + j;
                c[i] = (proj[2][row + j] + hu_h[i] + p.b[2][j]).tanh();
                h_new[i] = (T::one() - z[i]) * h_prev[i] + z[i] * c[i];
                out[row + j] = h_new[i];
            }
        }
        cache.z.push(z);
        cache.r.push(r);
        cache.c.push(c);
        cache.h.push(h_new.clone());
        h_prev = h_new;
    }
    Ok((out, cache))
}

/// Backpropagation through time. Parameter gradients are keyed
/// `W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h`.
pub fn backward<T: Real>(
    cache: &GruCache<T>,
    p: GruParams<'_, T>,
    d_out: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    let [b, t, d, h] = cache.dims;
    if d_out.shape() != [b, t, h] {
        return Err(Error::dim(
            "gru backward",
            format!("d_out {:?} != [{b}, {t}, {h}]", d_out.shape()),
        ));
    }
    // Pre-activation gradients for all frames, [B*T, H] per gate.
    let mut d_pre: Vec<Vec<T>> = (0..3).map(|_| vec![T::zero(); b * t * h]).collect();
    let mut d_u: Vec<Vec<T>> = (0..3).map(|_| vec![T::zero(); h * h]).collect();
    let mut d_b: Vec<Vec<T>> = (0..3).map(|_| vec![T::zero(); h]).collect();
    let mut dh_next = vec![T::zero(); b * h];
    let mut da = [vec![T::zero(); b * h], vec![T::zero(); b * h], vec![T::zero(); b * h]];
    let mut dh_prev = vec![T::zero(); b * h];
    let mut drh = vec![T::zero(); b * h];
    let mut rh = vec![T::zero(); b * h];

    for step in (0..t).rev() {
        let h_prev: &[T] = if step == 0 { &cache.h0 } else { &cache.h[step - 1] };
        let (z, r, c) = (&cache.z[step], &cache.r[step], &cache.c[step]);
        for bi in 0..b {
            let row = (bi * t + step) * h;
            for j in 0..h {
                let i = bi * h + j;
                let dh = d_out[row + j] + dh_next[i];
                let dz = dh * (c[i] - h_prev[i]);
                let dc = dh * z[i];
                dh_prev[i] = dh * (T::one() - z[i]);
                da[2][i] = dc * (T::one() - c[i] * c[i]);
                da[0][i] = dz * z[i] * (T::one() - z[i]);
                rh[i] = r[i] * h_prev[i];
            }
        }
        // candidate path: dU_h += (r*h)^T da_h ; d(r*h) = da_h U_h^T
        gemm(h, b, h, T::one(), Mat::T(&rh), Mat::N(&da[2]), T::one(), &mut d_u[2]);
        gemm(b, h, h, T::one(), Mat::N(&da[2]), Mat::T(p.u[2].data()), T::zero(), &mut drh);
        for i in 0..b * h {
            let dr = drh[i] * h_prev[i];
            dh_prev[i] += drh[i] * r[i];
            da[1][i] = dr * r[i] * (T::one() - r[i]);
        }
        for g in [0, 1] {
            gemm(h, b, h, T::one(), Mat::T(h_prev), Mat::N(&da[g]), T::one(), &mut d_u[g]);
            gemm(b, h, h, T::one(), Mat::N(&da[g]), Mat::T(p.u[g].data()), T::one(), &mut dh_prev);
        }
        for g in 0..3 {
            for bi in 0..b {
                let row = (bi * t + step) * h;
                for j in 0..h {
                    let v = da[g][bi * h + j];
                    d_pre[g][row + j] = v;
                    d_b[g][j] += v;
                }
            }
        }
        std::mem::swap(&mut dh_next, &mut dh_prev);
    }

    let x = cache.input.data();
    let mut d_input = Tensor::zeros(&[b, t, d]);
    let mut d_params = BTreeMap::new();
    for g in 0..3 {
        let mut dw = vec![T::zero(); d * h];
        gemm(d, b * t, h, T::one(), Mat::T(x), Mat::N(&d_pre[g]), T::zero(), &mut dw);
        gemm(b * t, h, d, T::one(), Mat::N(&d_pre[g]), Mat::T(p.w[g].data()), T::one(), d_input.data_mut());
        let name = GATES[g];
        d_params.insert(format!("W_{name}"), Tensor::from_vec(&[d, h], dw)?);
        d_params.insert(format!("U_{name}"), Tensor::from_vec(&[h, h], std::mem::take(&mut d_u[g]))?);
        d_params.insert(format!("b_{name}"), Tensor::from_vec(&[h], std::mem::take(&mut d_b[g]))?);
    }
    Ok(LayerGrad { d_input, d_params })
}

/// Per-layer parameter count with one bias per gate: `3 ((D + H) H + H)`.
pub fn param_count(input_dim: usize, units: usize) -> usize {
    3 * ((input_dim + units) * units + units)
}
