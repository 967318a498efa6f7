//! Residual block: `h = relu20(bn2(conv2(relu20(bn1(conv1(x)))))) + x`.
//!
//! Both convolutions are 3x3, stride 1, zero padding 1. The skip is the
//! identity, so input and block channel counts must agree.

use std::collections::BTreeMap;

use super::{
    clipped_relu, clipped_relu_backward, BatchNorm, BnCache, BnParams, BnStats, Conv2d, LayerGrad,
    Mode,
};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const RES_CONV: Conv2d = Conv2d {
    stride: (1, 1),
    pad: (1, 1),
};

#[derive(Clone, Copy)]
pub struct ResBlockParams<'a, T: Real> {
    pub conv1: &'a Tensor<T>,
    pub bn1: BnParams<'a, T>,
    pub conv2: &'a Tensor<T>,
    pub bn2: BnParams<'a, T>,
}

#[derive(Clone, Debug)]
pub struct ResBlockCache<T: Real> {
    input: Tensor<T>,
    bn1_in: Tensor<T>,
    bn1: BnCache<T>,
    n1: Tensor<T>,
    r1: Tensor<T>,
    bn2: BnCache<T>,
    n2: Tensor<T>,
}

impl<T: Real> ResBlockCache<T> {
    /// Train-mode batch moments of (bn1, bn2).
    pub fn stats(&self) -> [Option<&BnStats>; 2] {
        [self.bn1.stats.as_ref(), self.bn2.stats.as_ref()]
    }

    pub fn conv1_input(&self) -> &Tensor<T> {
        &self.input
    }

    pub fn bn1_input(&self) -> &Tensor<T> {
        &self.bn1_in
    }
}

pub fn forward<T: Real>(
    input: &Tensor<T>,
    p: ResBlockParams<'_, T>,
    bn: &BatchNorm,
    mode: Mode,
) -> Result<(Tensor<T>, ResBlockCache<T>)> {
    let [_, c, _, _] = input.dims4("resblock")?;
    for (name, k) in [("conv1", p.conv1), ("conv2", p.conv2)] {
        let [co, ci, _, _] = k.dims4("resblock kernel")?;
        if co != c || ci != c {
            return Err(Error::Config(format!(
                "resblock {name} is {co}<-{ci} channels but input has {c}; identity skip needs equal widths"
            )));
        }
    }
    let a1 = RES_CONV.forward(input, p.conv1)?;
    let (n1, bn1) = bn.forward(&a1, p.bn1, mode)?;
    let r1 = clipped_relu(&n1);
    let a2 = RES_CONV.forward(&r1, p.conv2)?;
    let (n2, bn2) = bn.forward(&a2, p.bn2, mode)?;
    let mut out = clipped_relu(&n2);
    out.add_assign(input)?;
    Ok((
        out,
        ResBlockCache {
            input: input.clone(),
            bn1_in: a1,
            bn1,
            n1,
            r1,
            bn2,
            n2,
        },
    ))
}

/// Parameter gradients are keyed `conv1/W`, `bn1/gamma`, `bn1/beta`,
/// `conv2/W`, `bn2/gamma`, `bn2/beta`.
pub fn backward<T: Real>(
    cache: &ResBlockCache<T>,
    p: ResBlockParams<'_, T>,
    bn: &BatchNorm,
    d_out: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    let dn2 = clipped_relu_backward(&cache.n2, d_out);
    let g_bn2 = bn.backward(&cache.bn2, p.bn2.gamma, &dn2)?;
    let g_c2 = RES_CONV.backward(&cache.r1, p.conv2, &g_bn2.d_input)?;
    let dn1 = clipped_relu_backward(&cache.n1, &g_c2.d_input);
    let g_bn1 = bn.backward(&cache.bn1, p.bn1.gamma, &dn1)?;
    let g_c1 = RES_CONV.backward(&cache.input, p.conv1, &g_bn1.d_input)?;

    let mut d_input = g_c1.d_input;
    d_input.add_assign(d_out)?;

    let mut d_params = BTreeMap::new();
    for (prefix, g) in [("conv1", g_c1.d_params), ("bn1", g_bn1.d_params), ("conv2", g_c2.d_params), ("bn2", g_bn2.d_params)] {
        for (k, v) in g {
            d_params.insert(format!("{prefix}/{k}"), v);
        }
    }
    Ok(LayerGrad { d_input, d_params })
}
