//! Batched forward and backward passes through a whole embedder.
//!
//! Input is `[B, 1, T, F]`. Both architectures run one or more stride-2 conv
//! stages (conv, BN, clipped ReLU, then ResBlocks for ResCNN), flatten to
//! frames of `C * F'` features, optionally run GRUs, average over time, apply
//! the affine layer and length-normalize.

use std::collections::BTreeMap;

use super::arch::{ArchKind, STAGE_CONV};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::nn::{
    self, affine, affine_backward, clipped_relu, clipped_relu_backward, l2_normalize_backward, l2_normalize_rows,
    temporal_average, temporal_average_backward, BatchNorm, BnCache, BnStats, GruCache, GruParams, Mode, ResBlockCache,
    ResBlockParams,
};
use crate::tensor::{Real, Tensor};

pub const BN: BatchNorm = BatchNorm { eps: 1e-5, decay: 0.99 };

pub type Grads<T> = BTreeMap<String, Tensor<T>>;

#[derive(Clone, Debug)]
struct StageTape<T: Real> {
    input: Tensor<T>,
    bn: BnCache<T>,
    pre_act: Tensor<T>,
    blocks: Vec<ResBlockCache<T>>,
}

#[derive(Clone, Debug)]
struct Tape<T: Real> {
    stages: Vec<StageTape<T>>,
    conv_dims: [usize; 4],
    grus: Vec<GruCache<T>>,
    frames: usize,
    pooled: Tensor<T>,
    norms: Vec<T>,
}

/// Result of a batched forward pass.
#[derive(Clone, Debug)]
pub struct Forward<T: Real> {
    /// `[B, E]`, unit rows.
    pub embeddings: Tensor<T>,
    /// `[B, E]` affine output before length normalization (softmax head input).
    pub pre_norm: Tensor<T>,
    /// Batch moments per BN layer prefix; empty in infer mode.
    pub bn_stats: Vec<(String, BnStats)>,
    tape: Tape<T>,
}

fn stage_name(c: usize) -> String {
    format!("conv{c}-s")
}

fn block_name(c: usize, b: usize) -> String {
    format!("res{c}/{b}")
}

fn block_params<'a, T: Real>(p: &'a ModelParams<T>, block: &str) -> Result<ResBlockParams<'a, T>> {
    Ok(ResBlockParams {
        conv1: p.get(&format!("{block}/conv1/W"))?,
        bn1: p.bn(&format!("{block}/bn1"))?,
        conv2: p.get(&format!("{block}/conv2/W"))?,
        bn2: p.bn(&format!("{block}/bn2"))?,
    })
}

fn gru_params<'a, T: Real>(p: &'a ModelParams<T>, layer: &str) -> Result<GruParams<'a, T>> {
    let get = |kind: &str, g: usize| p.get(&format!("{layer}/{kind}_{}", nn::gru::GATES[g]));
    Ok(GruParams {
        w: [get("W", 0)?, get("W", 1)?, get("W", 2)?],
        u: [get("U", 0)?, get("U", 1)?, get("U", 2)?],
        b: [get("b", 0)?, get("b", 1)?, get("b", 2)?],
    })
}

/// `[B, C, T, F]` to `[B, T, C*F]`.
fn to_frames<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, t, f] = x.dims4("flatten")?;
    let mut out = Tensor::zeros(&[b, t, c * f]);
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                let src = ((bi * c + ci) * t + ti) * f;
                let dst = (bi * t + ti) * c * f + ci * f;
                out.data_mut()[dst..dst + f].copy_from_slice(&x.data()[src..src + f]);
            }
        }
    }
    Ok(out)
}

fn from_frames<T: Real>(x: &Tensor<T>, dims: [usize; 4]) -> Result<Tensor<T>> {
    let [b, c, t, f] = dims;
    if x.shape() != [b, t, c * f] {
        return Err(Error::dim("unflatten", format!("{:?} vs {dims:?}", x.shape())));
    }
    let mut out = Tensor::zeros(&dims);
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                let dst = ((bi * c + ci) * t + ti) * f;
                let src = (bi * t + ti) * c * f + ci * f;
                out.data_mut()[dst..dst + f].copy_from_slice(&x.data()[src..src + f]);
            }
        }
    }
    Ok(out)
}

fn check_input<T: Real>(p: &ModelParams<T>, input: &Tensor<T>) -> Result<()> {
    let [_, c, t, f] = input.dims4("model input")?;
    if c != 1 || f != p.arch.input_freq {
        return Err(Error::dim(
            "model input",
            format!("expected [B, 1, T, {}], got {:?}", p.arch.input_freq, input.shape()),
        ));
    }
    let need = p.arch.min_frames();
    if t < need {
        return Err(Error::InsufficientFrames { need, got: t });
    }
    Ok(())
}

/// Runs the trunk on `[B, 1, T, F]`. In train mode BN uses batch moments
/// (returned in [`Forward::bn_stats`]; the caller decides whether to fold
/// them into the running averages).
pub fn forward<T: Real>(p: &ModelParams<T>, input: &Tensor<T>, mode: Mode) -> Result<Forward<T>> {
    check_input(p, input)?;
    let mut stats = Vec::new();
    let mut stages = Vec::new();
    let mut x = input.clone();
    for &c in &p.arch.channels {
        let name = stage_name(c);
        let conv = STAGE_CONV.forward(&x, p.get(&format!("{name}/W"))?)?;
        let (pre_act, bn) = BN.forward(&conv, p.bn(&format!("{name}/bn"))?, mode)?;
        if let Some(s) = &bn.stats {
            stats.push((format!("{name}/bn"), s.clone()));
        }
        let mut h = clipped_relu(&pre_act);
        let mut blocks = Vec::new();
        for b in 1..=p.arch.blocks_per_stage {
            let block = block_name(c, b);
            let (out, cache) = nn::resblock::forward(&h, block_params(p, &block)?, &BN, mode)?;
            for (i, s) in cache.stats().into_iter().enumerate() {
                if let Some(s) = s {
                    stats.push((format!("{block}/bn{}", i + 1), s.clone()));
                }
            }
            blocks.push(cache);
            h = out;
        }
        stages.push(StageTape {
            input: std::mem::replace(&mut x, h),
            bn,
            pre_act,
            blocks,
        });
    }
    let conv_dims = x.dims4("conv output")?;
    let mut frames = to_frames(&x)?;
    let mut grus = Vec::new();
    if p.arch.kind == ArchKind::Gru {
        for i in 1..=p.arch.gru_units.len() {
            let (out, cache) = nn::gru::forward(&frames, gru_params(p, &format!("gru{i}"))?, None)?;
            grus.push(cache);
            frames = out;
        }
    }
    let n_frames = frames.shape()[1];
    let pooled = temporal_average(&frames)?;
    let pre_norm = affine(&pooled, p.get("affine/W")?, p.get("affine/b")?)?;
    pre_norm.ensure_finite("embedding")?;
    let (embeddings, norms) = l2_normalize_rows(&pre_norm)?;
    Ok(Forward {
        embeddings,
        pre_norm,
        bn_stats: stats,
        tape: Tape {
            stages,
            conv_dims,
            grus,
            frames: n_frames,
            pooled,
            norms,
        },
    })
}

fn insert_prefixed<T: Real>(grads: &mut Grads<T>, prefix: &str, g: BTreeMap<String, Tensor<T>>) {
    for (k, v) in g {
        grads.insert(format!("{prefix}/{k}"), v);
    }
}

/// Gradients of all trunk parameters given upstream gradients on the unit
/// embeddings and/or directly on the pre-normalization output.
pub fn backward<T: Real>(
    p: &ModelParams<T>,
    fw: &Forward<T>,
    d_embeddings: Option<&Tensor<T>>,
    d_pre_norm: Option<&Tensor<T>>,
) -> Result<Grads<T>> {
    let tape = &fw.tape;
    let mut d_pre = Tensor::zeros(fw.pre_norm.shape());
    if let Some(d) = d_embeddings {
        d_pre.add_assign(&l2_normalize_backward(&fw.embeddings, &tape.norms, d)?)?;
    }
    if let Some(d) = d_pre_norm {
        d_pre.add_assign(d)?;
    }
    let mut grads = Grads::new();
    let g = affine_backward(&tape.pooled, p.get("affine/W")?, &d_pre)?;
    insert_prefixed(&mut grads, "affine", g.d_params);
    let mut d_frames = temporal_average_backward(tape.frames, &g.d_input)?;
    for (i, cache) in tape.grus.iter().enumerate().rev() {
        let layer = format!("gru{}", i + 1);
        let g = nn::gru::backward(cache, gru_params(p, &layer)?, &d_frames)?;
        insert_prefixed(&mut grads, &layer, g.d_params);
        d_frames = g.d_input;
    }
    let mut d = from_frames(&d_frames, tape.conv_dims)?;
    for (s, stage) in tape.stages.iter().enumerate().rev() {
        let c = p.arch.channels[s];
        for (b, cache) in stage.blocks.iter().enumerate().rev() {
            let block = block_name(c, b + 1);
            let g = nn::resblock::backward(cache, block_params(p, &block)?, &BN, &d)?;
            insert_prefixed(&mut grads, &block, g.d_params);
            d = g.d_input;
        }
        let name = stage_name(c);
        let d_bn = clipped_relu_backward(&stage.pre_act, &d);
        let g = BN.backward(&stage.bn, p.get(&format!("{name}/bn/gamma"))?, &d_bn)?;
        insert_prefixed(&mut grads, &format!("{name}/bn"), g.d_params);
        let w = p.get(&format!("{name}/W"))?;
        let need_input = s > 0;
        let g = STAGE_CONV.backward(&stage.input, w, &g.d_input)?;
        grads.insert(format!("{name}/W"), g.d_params["W"].clone());
        if need_input {
            d = g.d_input;
        }
    }
    Ok(grads)
}

/// Softmax head logits `[B, K]` from the pre-normalization output.
pub fn head_logits<T: Real>(p: &ModelParams<T>, pre_norm: &Tensor<T>) -> Result<Tensor<T>> {
    if p.head_classes().is_none() {
        return Err(Error::Config("no softmax head attached".into()));
    }
    affine(pre_norm, p.get("head/W")?, p.get("head/b")?)
}

/// Returns the gradient on `pre_norm` and inserts `head/W`, `head/b` into `grads`.
pub fn head_backward<T: Real>(
    p: &ModelParams<T>,
    pre_norm: &Tensor<T>,
    d_logits: &Tensor<T>,
    grads: &mut Grads<T>,
) -> Result<Tensor<T>> {
    let g = affine_backward(pre_norm, p.get("head/W")?, d_logits)?;
    insert_prefixed(grads, "head", g.d_params);
    Ok(g.d_input)
}

/// Stacks equal-length feature matrices into `[B, 1, T, F]`.
pub fn batch_input<T: Real>(feats: &[&crate::frontend::FeatureMatrix]) -> Result<Tensor<T>> {
    let first = feats.first().ok_or_else(|| Error::dim("batch", "empty batch"))?;
    let (t, f) = (first.frames(), first.dim());
    let mut data = Vec::with_capacity(feats.len() * t * f);
    for m in feats {
        if m.frames() != t || m.dim() != f {
            return Err(Error::dim(
                "batch",
                format!("{} is {}x{}, batch is {t}x{f}", m.utt_id, m.frames(), m.dim()),
            ));
        }
        data.extend(m.data().iter().map(|&v| T::of(v as f64)));
    }
    Tensor::from_vec(&[feats.len(), 1, t, f], data)
}
