//! 2-D convolution over `[batch, channel, time, freq]` tensors via im2col + GEMM.
//! There is no bias term; the following batch norm provides the shift.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::LayerGrad;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Mat, Real, Tensor};

/// Samples per work unit. Fixed so reductions happen in the same order
/// regardless of thread count.
const BATCH_GROUP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }
}

impl Conv2d {
    pub fn new(stride: (usize, usize), pad: (usize, usize)) -> Self {
        Self { stride, pad }
    }

    /// `floor((n + 2p - k) / s) + 1` per axis.
    pub fn output_hw(&self, h: usize, w: usize, kh: usize, kw: usize) -> Result<(usize, usize)> {
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::dim("conv2d", "stride must be positive"));
        }
        let (ph, pw) = (h + 2 * self.pad.0, w + 2 * self.pad.1);
        if kh > ph || kw > pw {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {kh}x{kw} does not fit padded input {ph}x{pw} (time x freq)"),
            ));
        }
        Ok(((ph - kh) / self.stride.0 + 1, (pw - kw) / self.stride.1 + 1))
    }

    fn geometry<T: Real>(&self, input: &Tensor<T>, kernel: &Tensor<T>) -> Result<Geometry> {
        let [_, c_in, h, w] = input.dims4("conv2d input")?;
        let [c_out, kc, kh, kw] = kernel.dims4("conv2d kernel")?;
        if kc != c_in {
            return Err(Error::dim(
                "conv2d",
                format!("input channels {c_in} != kernel input channels {kc} (axis 1)"),
            ));
        }
        let (oh, ow) = self.output_hw(h, w, kh, kw)?;
        Ok(Geometry {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            oh,
            ow,
        })
    }

    fn im2col<T: Real>(&self, g: &Geometry, x: &[T], cols: &mut [T]) {
        let p = g.p();
        for ci in 0..g.c_in {
            let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (ci * g.kh + ki) * g.kw + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oi in 0..g.oh {
                        let ii = (oi * self.stride.0 + ki) as isize - self.pad.0 as isize;
                        let out_row = &mut dst[oi * g.ow..(oi + 1) * g.ow];
                        if ii < 0 || ii >= g.h as isize {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                        for (oj, o) in out_row.iter_mut().enumerate() {
                            let jj = (oj * self.stride.1 + kj) as isize - self.pad.1 as isize;
                            *o = if jj < 0 || jj >= g.w as isize {
                                T::zero()
                            } else {
                                src[jj as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, g: &Geometry, cols: &[T], dx: &mut [T]) {
        let p = g.p();
        for ci in 0..g.c_in {
            let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (ci * g.kh + ki) * g.kw + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    for oi in 0..g.oh {
                        let ii = (oi * self.stride.0 + ki) as isize - self.pad.0 as isize;
                        if ii < 0 || ii >= g.h as isize {
                            continue;
                        }
                        let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                        for oj in 0..g.ow {
                            let jj = (oj * self.stride.1 + kj) as isize - self.pad.1 as isize;
                            if jj >= 0 && jj < g.w as isize {
                                dst[jj as usize] += src[oi * g.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `[B, C_in, H, W] * [C_out, C_in, kH, kW] -> [B, C_out, H', W']`.
    pub fn forward<T: Real>(&self, input: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(input, kernel)?;
        let b = input.shape()[0];
        let in_len = g.c_in * g.h * g.w;
        let out_len = g.c_out * g.p();
        let mut out = Tensor::zeros(&[b, g.c_out, g.oh, g.ow]);
        let x = input.data();
        let wk = kernel.data();
        out.data_mut()
            .par_chunks_mut(out_len * BATCH_GROUP)
            .enumerate()
            .for_each(|(gi, out_group)| {
                let mut cols = vec![T::zero(); g.k() * g.p()];
                for (j, out_s) in out_group.chunks_mut(out_len).enumerate() {
                    let s = gi * BATCH_GROUP + j;
                    self.im2col(&g, &x[s * in_len..(s + 1) * in_len], &mut cols);
                    gemm(
                        g.c_out,
                        g.k(),
                        g.p(),
                        T::one(),
                        Mat::N(wk),
                        Mat::N(&cols),
                        T::zero(),
                        out_s,
                    );
                }
            });
        Ok(out)
    }

    /// Returns `d_input` and `d_params["W"]`.
    pub fn backward<T: Real>(
        &self,
        input: &Tensor<T>,
        kernel: &Tensor<T>,
        d_out: &Tensor<T>,
    ) -> Result<LayerGrad<T>> {
        let g = self.geometry(input, kernel)?;
        let b = input.shape()[0];
        let expected = [b, g.c_out, g.oh, g.ow];
        if d_out.shape() != expected {
            return Err(Error::dim(
                "conv2d backward",
                format!("d_out {:?} != {:?}", d_out.shape(), expected),
            ));
        }
        let in_len = g.c_in * g.h * g.w;
        let out_len = g.c_out * g.p();
        let x = input.data();
        let dy = d_out.data();
        let wk = kernel.data();
        let mut d_input = Tensor::zeros(input.shape());

        let partial_dw: Vec<Vec<T>> = d_input
            .data_mut()
            .par_chunks_mut(in_len * BATCH_GROUP)
            .enumerate()
            .map(|(gi, dx_group)| {
                let mut cols = vec![T::zero(); g.k() * g.p()];
                let mut dcols = vec![T::zero(); g.k() * g.p()];
                let mut dw = vec![T::zero(); g.c_out * g.k()];
                for (j, dx_s) in dx_group.chunks_mut(in_len).enumerate() {
                    let s = gi * BATCH_GROUP + j;
                    let dy_s = &dy[s * out_len..(s + 1) * out_len];
                    self.im2col(&g, &x[s * in_len..(s + 1) * in_len], &mut cols);
                    // dW += dY * cols^T
                    gemm(
                        g.c_out,
                        g.p(),
                        g.k(),
                        T::one(),
                        Mat::N(dy_s),
                        Mat::T(&cols),
                        T::one(),
                        &mut dw,
                    );
                    // dcols = W^T * dY
                    gemm(
                        g.k(),
                        g.c_out,
                        g.p(),
                        T::one(),
                        Mat::T(wk),
                        Mat::N(dy_s),
                        T::zero(),
                        &mut dcols,
                    );
                    self.col2im(&g, &dcols, dx_s);
                }
                dw
            })
            .collect();

        let mut d_kernel = Tensor::zeros(kernel.shape());
        for part in &partial_dw {
            for (acc, &v) in d_kernel.data_mut().iter_mut().zip(part) {
                *acc += v;
            }
        }
        let mut d_params = BTreeMap::new();
        d_params.insert("W".to_string(), d_kernel);
        Ok(LayerGrad { d_input, d_params })
    }
}

/// Free-function form of [`Conv2d::forward`].
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor<T>> {
    Conv2d::new(stride, pad).forward(input, kernel)
}
