use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::arch::{ArchSpec, Init, LayerPlan, ParamSpec};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, BnParams, BnStats};
use crate::tensor::{Real, Tensor};

/// Named weights of one model, plus BN running moments and an optional
/// softmax head (`head/W`, `head/b`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    pub arch: ArchSpec,
    pub seed: u64,
    pub epoch: u32,
    tensors: BTreeMap<String, Tensor<T>>,
    buffers: BTreeMap<String, Tensor<T>>,
    head_classes: Option<usize>,
}

fn init_values<R: Rng>(spec: &ParamSpec, rng: &mut R) -> Vec<f64> {
    let n = spec.numel();
    let uniform = |limit: f64, rng: &mut R| (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::HeUniform { fan_in } => uniform((6.0 / fan_in as f64).sqrt(), rng),
        Init::GlorotUniform { fan_in, fan_out } => uniform((6.0 / (fan_in + fan_out) as f64).sqrt(), rng),
        Init::Orthogonal => orthogonal(spec.shape[0], rng),
    }
}

/// Square orthogonal matrix: modified Gram-Schmidt over Gaussian rows.
fn orthogonal<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..n {
        let (done, rest) = m.split_at_mut(i * n);
        let row = &mut rest[..n];
        for j in 0..i {
            let q = &done[j * n..(j + 1) * n];
            let d: f64 = q.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
            row.iter_mut().zip(q).for_each(|(r, &qv)| *r -= d * qv);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|r| *r /= norm);
    }
    m
}

fn materialize<T: Real, R: Rng>(spec: &ParamSpec, rng: &mut R) -> Tensor<T> {
    let v = init_values(spec, rng);
    Tensor::from_vec(&spec.shape, v.into_iter().map(T::of).collect()).expect("plan shape")
}

impl<T: Real> ModelParams<T> {
    /// Fresh weights for `arch`, fully determined by `seed`.
    pub fn build(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        let mut buffers = BTreeMap::new();
        for layer in arch.layer_plan() {
            for p in &layer.params {
                tensors.insert(p.name.clone(), materialize(p, &mut rng));
            }
            for b in &layer.buffers {
                buffers.insert(b.name.clone(), materialize(b, &mut rng));
            }
        }
        Ok(Self {
            arch,
            seed,
            epoch: 0,
            tensors,
            buffers,
            head_classes: None,
        })
    }

    /// Assembles a model from loaded tensors, checking them against the plan.
    pub fn from_parts(
        arch: ArchSpec,
        seed: u64,
        epoch: u32,
        tensors: BTreeMap<String, Tensor<T>>,
        buffers: BTreeMap<String, Tensor<T>>,
        head_classes: Option<usize>,
    ) -> Result<Self> {
        arch.validate()?;
        let m = Self {
            arch,
            seed,
            epoch,
            tensors,
            buffers,
            head_classes,
        };
        m.check_complete()?;
        Ok(m)
    }

    fn plan(&self) -> Vec<LayerPlan> {
        let mut plan = self.arch.layer_plan();
        if let Some(k) = self.head_classes {
            plan.push(self.arch.head_plan(k));
        }
        plan
    }

    /// Every planned name is present with the planned shape, and nothing else is.
    pub fn check_complete(&self) -> Result<()> {
        let plan = self.plan();
        let expect = |specs: Vec<&ParamSpec>, have: &BTreeMap<String, Tensor<T>>, what: &str| -> Result<()> {
            for s in &specs {
                match have.get(&s.name) {
                    None => return Err(Error::Integrity(format!("missing {what} {}", s.name))),
                    Some(t) if t.shape() != s.shape.as_slice() => {
                        return Err(Error::Integrity(format!(
                            "{what} {} has shape {:?}, plan says {:?}",
                            s.name,
                            t.shape(),
                            s.shape
                        )))
                    }
                    _ => {}
                }
            }
            if have.len() != specs.len() {
                let extra: Vec<_> = have
                    .keys()
                    .filter(|k| !specs.iter().any(|s| &s.name == *k))
                    .collect();
                return Err(Error::Integrity(format!("unexpected {what}s {extra:?}")));
            }
            Ok(())
        };
        expect(plan.iter().flat_map(|l| &l.params).collect(), &self.tensors, "parameter")?;
        expect(plan.iter().flat_map(|l| &l.buffers).collect(), &self.buffers, "buffer")
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .or_else(|| self.buffers.get(name))
            .ok_or_else(|| Error::Integrity(format!("model has no tensor {name}")))
    }

    pub fn bn(&self, prefix: &str) -> Result<BnParams<'_, T>> {
        Ok(BnParams {
            gamma: self.get(&format!("{prefix}/gamma"))?,
            beta: self.get(&format!("{prefix}/beta"))?,
            running_mean: self.get(&format!("{prefix}/running_mean"))?,
            running_var: self.get(&format!("{prefix}/running_var"))?,
        })
    }

    /// Trainable tensors, head included when attached.
    pub fn tensors(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut BTreeMap<String, Tensor<T>> {
        &mut self.tensors
    }

    pub fn buffers(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut BTreeMap<String, Tensor<T>> {
        &mut self.buffers
    }

    /// Trainable parameters excluding any head.
    pub fn trunk_param_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| !k.starts_with("head/"))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn head_classes(&self) -> Option<usize> {
        self.head_classes
    }

    pub fn attach_softmax_head(&mut self, classes: usize, seed: u64) -> Result<()> {
        if let Some(k) = self.head_classes {
            return Err(Error::Config(format!("a {k}-class softmax head is already attached")));
        }
        if classes < 2 {
            return Err(Error::Config(format!("softmax head needs at least 2 classes, got {classes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.arch.head_plan(classes).params {
            let t = materialize(&p, &mut rng);
            self.tensors.insert(p.name, t);
        }
        self.head_classes = Some(classes);
        Ok(())
    }

    pub fn detach_softmax_head(&mut self) -> Result<()> {
        if self.head_classes.take().is_none() {
            return Err(Error::Config("no softmax head to detach".into()));
        }
        self.tensors.retain(|k, _| !k.starts_with("head/"));
        Ok(())
    }

    /// Folds train-mode batch moments into the running averages.
    pub fn apply_bn_stats(&mut self, stats: &[(String, BnStats)], bn: &BatchNorm) -> Result<()> {
        for (prefix, s) in stats {
            let mean_key = format!("{prefix}/running_mean");
            let var_key = format!("{prefix}/running_var");
            if let Some(k) = [&mean_key, &var_key].into_iter().find(|k| !self.buffers.contains_key(*k)) {
                return Err(Error::Integrity(format!("model has no buffer {k}")));
            }
            let mut mean = self.buffers.remove(&mean_key).expect("checked above");
            bn.update_running(s, &mut mean, self.buffers.get_mut(&var_key).expect("checked above"));
            self.buffers.insert(mean_key, mean);
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let conv = |m: &BTreeMap<String, Tensor<T>>| m.iter().map(|(k, v)| (k.clone(), v.cast())).collect();
        ModelParams {
            arch: self.arch.clone(),
            seed: self.seed,
            epoch: self.epoch,
            tensors: conv(&self.tensors),
            buffers: conv(&self.buffers),
            head_classes: self.head_classes,
        }
    }
}
