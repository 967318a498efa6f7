//! Architecture descriptors and their parameter plans.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::Conv2d;

/// Stride-2 5x5 convolution that opens every stage.
pub const STAGE_CONV: Conv2d = Conv2d {
    stride: (2, 2),
    pad: (2, 2),
};
pub const STAGE_KERNEL: usize = 5;
pub const RES_KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    ResCnn,
    Gru,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    pub kind: ArchKind,
    pub input_freq: usize,
    pub embed_dim: usize,
    /// Output channels of each stride-2 stage. The GRU model has one stage.
    pub channels: Vec<usize>,
    /// ResBlocks after each stage (ResCNN only).
    pub blocks_per_stage: usize,
    /// Units of each forward GRU layer (GRU only).
    pub gru_units: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    HeUniform { fan_in: usize },
    GlorotUniform { fan_in: usize, fan_out: usize },
    Orthogonal,
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn new(name: String, shape: &[usize], init: Init) -> Self {
        Self {
            name,
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// One row of the layer table: a named layer and the parameters it owns.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPlan {
    pub name: String,
    pub params: Vec<ParamSpec>,
    /// BN running moments (not trainable, not counted).
    pub buffers: Vec<ParamSpec>,
}

impl LayerPlan {
    pub fn count(&self) -> usize {
        self.params.iter().map(ParamSpec::numel).sum()
    }
}

fn conv_bn(layer: &str, c_out: usize, c_in: usize, k: usize, units: usize, bn: &str) -> (Vec<ParamSpec>, Vec<ParamSpec>) {
    let params = vec![
        ParamSpec::new(format!("{layer}/W"), &[c_out, c_in, k, k], Init::HeUniform { fan_in: c_in * k * k }),
        ParamSpec::new(format!("{layer}/{bn}/gamma"), &[units], Init::Ones),
        ParamSpec::new(format!("{layer}/{bn}/beta"), &[units], Init::Zeros),
    ];
    let buffers = vec![
        ParamSpec::new(format!("{layer}/{bn}/running_mean"), &[units], Init::Zeros),
        ParamSpec::new(format!("{layer}/{bn}/running_var"), &[units], Init::Ones),
    ];
    (params, buffers)
}

/// `ceil(n / 2)`: size of an axis after a stride-2, pad-2, 5-wide conv.
pub fn halve(n: usize) -> usize {
    n.div_ceil(2)
}

impl ArchSpec {
    /// Residual CNN: four stages at 64/128/256/512 channels, three blocks each.
    pub fn rescnn() -> Self {
        Self {
            name: "rescnn".into(),
            kind: ArchKind::ResCnn,
            input_freq: 64,
            embed_dim: 512,
            channels: vec![64, 128, 256, 512],
            blocks_per_stage: 3,
            gru_units: vec![],
        }
    }

    /// One stride-2 conv stage followed by three 1024-unit forward GRUs.
    pub fn gru() -> Self {
        Self {
            name: "gru".into(),
            kind: ArchKind::Gru,
            input_freq: 64,
            embed_dim: 512,
            channels: vec![64],
            blocks_per_stage: 0,
            gru_units: vec![1024, 1024, 1024],
        }
    }

    pub fn toy_rescnn() -> Self {
        Self {
            name: "toy-rescnn".into(),
            kind: ArchKind::ResCnn,
            input_freq: 64,
            embed_dim: 64,
            channels: vec![8, 16],
            blocks_per_stage: 1,
            gru_units: vec![],
        }
    }

    pub fn toy_gru() -> Self {
        Self {
            name: "toy-gru".into(),
            kind: ArchKind::Gru,
            input_freq: 64,
            embed_dim: 64,
            channels: vec![8],
            blocks_per_stage: 0,
            gru_units: vec![64, 64],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "rescnn" => Ok(Self::rescnn()),
            "gru" => Ok(Self::gru()),
            "toy-rescnn" => Ok(Self::toy_rescnn()),
            "toy-gru" => Ok(Self::toy_gru()),
            other => Err(Error::Config(format!(
                "unknown architecture {other:?} (rescnn, gru, toy-rescnn, toy-gru)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.name)));
        if self.input_freq == 0 || self.embed_dim == 0 {
            return bad("input_freq and embed_dim must be positive");
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("need at least one non-empty conv stage");
        }
        let distinct: std::collections::BTreeSet<_> = self.channels.iter().collect();
        if distinct.len() != self.channels.len() {
            return bad("stage widths must be distinct (layers are named by width)");
        }
        match self.kind {
            ArchKind::ResCnn => {
                if !self.gru_units.is_empty() {
                    return bad("ResCNN takes no GRU layers");
                }
            }
            ArchKind::Gru => {
                if self.channels.len() != 1 || self.blocks_per_stage != 0 {
                    return bad("GRU model has exactly one conv stage and no ResBlocks");
                }
                if self.gru_units.is_empty() || self.gru_units.contains(&0) {
                    return bad("GRU model needs at least one non-empty GRU layer");
                }
            }
        }
        Ok(())
    }

    /// Frequency bins after each stage.
    pub fn stage_freqs(&self) -> Vec<usize> {
        let mut f = self.input_freq;
        self.channels
            .iter()
            .map(|_| {
                f = halve(f);
                f
            })
            .collect()
    }

    /// Frames left after all stride-2 stages.
    pub fn output_frames(&self, frames: usize) -> usize {
        self.channels.iter().fold(frames, |t, _| halve(t))
    }

    /// Shortest accepted input: one frame per halving.
    pub fn min_frames(&self) -> usize {
        1 << self.channels.len()
    }

    /// Width of each frame vector after the conv stage(s): channels x freq.
    pub fn conv_frame_dim(&self) -> usize {
        self.channels.last().copied().unwrap_or(0) * self.stage_freqs().last().copied().unwrap_or(0)
    }

    /// Width fed to the affine layer.
    pub fn pooled_dim(&self) -> usize {
        match self.kind {
            ArchKind::ResCnn => self.conv_frame_dim(),
            ArchKind::Gru => *self.gru_units.last().unwrap_or(&0),
        }
    }

    /// Layer-by-layer parameter plan, in forward order.
    pub fn layer_plan(&self) -> Vec<LayerPlan> {
        let mut plan = Vec::new();
        let freqs = self.stage_freqs();
        let mut c_in = 1;
        for (s, &c) in self.channels.iter().enumerate() {
            let units = c * freqs[s];
            let layer = format!("conv{c}-s");
            let (params, buffers) = conv_bn(&layer, c, c_in, STAGE_KERNEL, units, "bn");
            plan.push(LayerPlan { name: layer, params, buffers });
            for b in 1..=self.blocks_per_stage {
                let block = format!("res{c}/{b}");
                let mut params = Vec::new();
                let mut buffers = Vec::new();
                for i in 1..=2 {
                    let (p, bu) = conv_bn(&block, c, c, RES_KERNEL, units, &format!("bn{i}"));
                    let mut p = p;
                    p[0].name = format!("{block}/conv{i}/W");
                    params.extend(p);
                    buffers.extend(bu);
                }
                plan.push(LayerPlan { name: block, params, buffers });
            }
            c_in = c;
        }
        let mut d = self.conv_frame_dim();
        for (i, &h) in self.gru_units.iter().enumerate() {
            let layer = format!("gru{}", i + 1);
            let mut params = Vec::new();
            for g in crate::nn::gru::GATES {
                params.push(ParamSpec::new(
                    format!("{layer}/W_{g}"),
                    &[d, h],
                    Init::GlorotUniform { fan_in: d, fan_out: h },
                ));
            }
            for g in crate::nn::gru::GATES {
                params.push(ParamSpec::new(format!("{layer}/U_{g}"), &[h, h], Init::Orthogonal));
            }
            for g in crate::nn::gru::GATES {
                params.push(ParamSpec::new(format!("{layer}/b_{g}"), &[h], Init::Zeros));
            }
            plan.push(LayerPlan { name: layer, params, buffers: vec![] });
            d = h;
        }
        let pooled = self.pooled_dim();
        plan.push(LayerPlan {
            name: "affine".into(),
            params: vec![
                ParamSpec::new("affine/W".into(), &[pooled, self.embed_dim], Init::HeUniform { fan_in: pooled }),
                ParamSpec::new("affine/b".into(), &[self.embed_dim], Init::Zeros),
            ],
            buffers: vec![],
        });
        plan
    }

    /// Plan entries for a softmax head over `classes` speakers.
    pub fn head_plan(&self, classes: usize) -> LayerPlan {
        LayerPlan {
            name: "head".into(),
            params: vec![
                ParamSpec::new("head/W".into(), &[self.embed_dim, classes], Init::HeUniform { fan_in: self.embed_dim }),
                ParamSpec::new("head/b".into(), &[classes], Init::Zeros),
            ],
            buffers: vec![],
        }
    }

    /// Trainable parameter count from per-layer formulas (no conv bias,
    /// per-(channel, freq) BN, one GRU bias per gate), independent of
    /// [`layer_plan`](Self::layer_plan).
    pub fn param_count(&self) -> usize {
        let freqs = self.stage_freqs();
        let mut total = 0;
        let mut c_in = 1;
        for (s, &c) in self.channels.iter().enumerate() {
            let bn = 2 * c * freqs[s];
            total += STAGE_KERNEL * STAGE_KERNEL * c_in * c + bn;
            total += self.blocks_per_stage * 2 * (RES_KERNEL * RES_KERNEL * c * c + bn);
            c_in = c;
        }
        let mut d = self.conv_frame_dim();
        for &h in &self.gru_units {
            total += crate::nn::gru::param_count(d, h);
            d = h;
        }
        total + self.pooled_dim() * self.embed_dim + self.embed_dim
    }
}
