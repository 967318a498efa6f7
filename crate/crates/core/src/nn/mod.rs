//! Layer primitives with hand-written backward passes.
//!
//! Every layer is a pair of pure functions: `forward` returns its output plus
//! whatever the backward pass needs, `backward` maps an output gradient to a
//! [`LayerGrad`]. Layers are generic over [`Real`](crate::tensor::Real) so the
//! same code runs in 32-bit for training and 64-bit for gradient checks.

use std::collections::BTreeMap;

use crate::tensor::{Real, Tensor};

pub mod activation;
pub mod affine;
pub mod batchnorm;
pub mod conv;
pub mod gradcheck;
pub mod gru;
pub mod loss;
pub mod normalize;
pub mod optim;
pub mod pooling;
pub mod resblock;

pub use activation::{clipped_relu, clipped_relu_backward, RELU_CLIP};
pub use affine::{affine, affine_backward};
pub use batchnorm::{BatchNorm, BnCache, BnParams, BnStats, Mode};
pub use conv::Conv2d;
pub use gradcheck::{grad_check, relative_error};
pub use gru::{GruCache, GruParams};
pub use loss::{cosine_similarity, softmax_xent, triplet_loss, triplet_loss_grad};
pub use normalize::{l2_normalize, l2_normalize_backward, l2_normalize_rows};
pub use optim::SgdMomentum;
pub use pooling::{temporal_average, temporal_average_backward};
pub use resblock::{ResBlockCache, ResBlockParams};

/// Gradient of one layer: w.r.t. its input and each named parameter.
#[derive(Clone, Debug)]
pub struct LayerGrad<T: Real> {
    pub d_input: Tensor<T>,
    pub d_params: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> LayerGrad<T> {
    pub fn param(&self, name: &str) -> &Tensor<T> {
        &self.d_params[name]
    }
}
