//! Sequence-wise batch normalization.
//!
//! For a `[B, C, T, F]` activation every (channel, frequency) pair is one
//! unit with its own gamma/beta; statistics are pooled over batch and time.
//! At the canonical widths this is 2048 units per layer.

use std::collections::BTreeMap;

use super::LayerGrad;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNorm {
    pub eps: f64,
    /// Decay of the running moments.
    pub decay: f64,
}

impl Default for BatchNorm {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            decay: 0.99,
        }
    }
}

/// Parameters and running moments of one BN layer, each of length
/// `channels * freq`.
#[derive(Clone, Copy)]
pub struct BnParams<'a, T: Real> {
    pub gamma: &'a Tensor<T>,
    pub beta: &'a Tensor<T>,
    pub running_mean: &'a Tensor<T>,
    pub running_var: &'a Tensor<T>,
}

/// Batch moments observed in a train-mode pass (biased variance).
#[derive(Clone, Debug)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BnCache<T: Real> {
    mode: Mode,
    dims: [usize; 4],
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    pub stats: Option<BnStats>,
}

fn for_each_unit<T: Real>(dims: [usize; 4], data: &[T], mut f: impl FnMut(usize, T)) {
    let [b, c, t, w] = dims;
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                let off = ((bi * c + ci) * t + ti) * w;
                for wi in 0..w {
                    f(ci * w + wi, data[off + wi]);
                }
            }
        }
    }
}

impl BatchNorm {
    pub fn units(dims: [usize; 4]) -> usize {
        dims[1] * dims[3]
    }

    pub fn forward<T: Real>(
        &self,
        input: &Tensor<T>,
        p: BnParams<'_, T>,
        mode: Mode,
    ) -> Result<(Tensor<T>, BnCache<T>)> {
        let dims = input.dims4("batchnorm")?;
        let units = Self::units(dims);
        for (name, t) in [
            ("gamma", p.gamma),
            ("beta", p.beta),
            ("running_mean", p.running_mean),
            ("running_var", p.running_var),
        ] {
            if t.len() != units {
                return Err(Error::dim(
                    "batchnorm",
                    format!("{name} has {} entries, activation has {units} units", t.len()),
                ));
            }
        }
        let count = (dims[0] * dims[2]) as f64;

        let (mean, var, stats) = match mode {
            Mode::Train => {
                if count == 0.0 {
                    return Err(Error::EmptyUtterance("batchnorm over zero frames".into()));
                }
                let mut sum = vec![0.0f64; units];
                for_each_unit(dims, input.data(), |u, v| sum[u] += v.as_f64());
                let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
                let mut sq = vec![0.0f64; units];
                for_each_unit(dims, input.data(), |u, v| {
                    let d = v.as_f64() - mean[u];
                    sq[u] += d * d;
                });
                let var: Vec<f64> = sq.iter().map(|s| s / count).collect();
                (
                    mean.clone(),
                    var.clone(),
                    Some(BnStats { mean, var }),
                )
            }
            Mode::Infer => (
                p.running_mean.data().iter().map(|v| v.as_f64()).collect(),
                p.running_var.data().iter().map(|v| v.as_f64()).collect(),
                None,
            ),
        };

        let inv_std: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + self.eps).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::of(m)).collect();
        let mut x_hat = vec![T::zero(); input.len()];
        let mut out = Tensor::zeros(input.shape());
        let [b, c, t, w] = dims;
        let (g, bt) = (p.gamma.data(), p.beta.data());
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    let off = ((bi * c + ci) * t + ti) * w;
                    for wi in 0..w {
                        let u = ci * w + wi;
                        let xh = (input[off + wi] - mean_t[u]) * inv_std[u];
                        x_hat[off + wi] = xh;
                        out[off + wi] = g[u] * xh + bt[u];
                    }
                }
            }
        }
        Ok((
            out,
            BnCache {
                mode,
                dims,
                x_hat,
                inv_std,
                stats,
            },
        ))
    }

    /// Returns `d_input`, `d_params["gamma"]`, `d_params["beta"]`.
    pub fn backward<T: Real>(
        &self,
        cache: &BnCache<T>,
        gamma: &Tensor<T>,
        d_out: &Tensor<T>,
    ) -> Result<LayerGrad<T>> {
        let dims = cache.dims;
        if d_out.shape() != dims {
            return Err(Error::dim(
                "batchnorm backward",
                format!("d_out {:?} != {:?}", d_out.shape(), dims),
            ));
        }
        let units = Self::units(dims);
        let mut d_gamma = vec![0.0f64; units];
        let mut d_beta = vec![0.0f64; units];
        let [b, c, t, w] = dims;
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    let off = ((bi * c + ci) * t + ti) * w;
                    for wi in 0..w {
                        let u = ci * w + wi;
                        let dy = d_out[off + wi].as_f64();
                        d_beta[u] += dy;
                        d_gamma[u] += dy * cache.x_hat[off + wi].as_f64();
                    }
                }
            }
        }
        let count = T::of((b * t) as f64);
        let mut d_input = Tensor::zeros(d_out.shape());
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    let off = ((bi * c + ci) * t + ti) * w;
                    for wi in 0..w {
                        let u = ci * w + wi;
                        let scale = gamma[u] * cache.inv_std[u];
                        let dy = d_out[off + wi];
                        d_input[off + wi] = match cache.mode {
                            Mode::Infer => scale * dy,
                            Mode::Train => {
                                scale / count
                                    * (count * dy
                                        - T::of(d_beta[u])
                                        - cache.x_hat[off + wi] * T::of(d_gamma[u]))
                            }
                        };
                    }
                }
            }
        }
        let mut d_params = BTreeMap::new();
        d_params.insert(
            "gamma".to_string(),
            Tensor::from_vec(&[units], d_gamma.into_iter().map(T::of).collect())?,
        );
        d_params.insert(
            "beta".to_string(),
            Tensor::from_vec(&[units], d_beta.into_iter().map(T::of).collect())?,
        );
        Ok(LayerGrad { d_input, d_params })
    }

    /// `running = decay * running + (1 - decay) * batch`.
    pub fn update_running<T: Real>(
        &self,
        stats: &BnStats,
        running_mean: &mut Tensor<T>,
        running_var: &mut Tensor<T>,
    ) {
        let d = self.decay;
        for (r, &m) in running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = T::of(d * r.as_f64() + (1.0 - d) * m);
        }
        for (r, &v) in running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = T::of(d * r.as_f64() + (1.0 - d) * v);
        }
    }
}
