use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Classical momentum: `v <- mu v - lr g; p <- p + v`.
#[derive(Clone, Debug)]
pub struct SgdMomentum<T: Real = f32> {
    pub momentum: f64,
    velocity: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> SgdMomentum<T> {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocity: BTreeMap::new(),
        }
    }

    pub fn velocity(&self, name: &str) -> Option<&Tensor<T>> {
        self.velocity.get(name)
    }

    /// Updates every parameter that has a gradient. Velocities start at zero.
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor<T>>,
        grads: &BTreeMap<String, Tensor<T>>,
        lr: f64,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::dim("sgd", format!("gradient for unknown parameter {name}")))?;
            p.same_shape(g, "sgd")?;
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            v.same_shape(g, "sgd velocity")?;
            sgd_momentum_step(p.data_mut(), g.data(), v.data_mut(), lr, self.momentum);
        }
        Ok(())
    }
}

/// One in-place update over aligned slices.
pub fn sgd_momentum_step<T: Real>(params: &mut [T], grads: &[T], velocity: &mut [T], lr: f64, momentum: f64) {
    let (lr, mu) = (T::of(lr), T::of(momentum));
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mu * *v - lr * g;
        *p += *v;
    }
}
