use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinerMode {
    Hard,
    SemiHard,
    Random,
}

impl std::str::FromStr for MinerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(Self::Hard),
            "semi-hard" => Ok(Self::SemiHard),
            "random" => Ok(Self::Random),
            other => Err(Error::Config(format!("unknown miner {other:?} (hard, semi-hard, random)"))),
        }
    }
}

/// Training hyper-parameters. Defaults are the full-scale recipe: softmax
/// pretraining for 10 epochs at minibatch 64, then triplet fine-tuning for 15
/// epochs at 128 pairs per batch, SGD with 0.99 momentum and a learning rate
/// falling linearly from 0.05 to 0.005, margin 0.1.
///
/// | key | meaning |
/// |---|---|
/// | `arch` | `rescnn`, `gru`, `toy-rescnn`, `toy-gru` |
/// | `seed` | root of every random choice in training |
/// | `chunk_frames` | frames per training crop |
/// | `pretrain_epochs`, `pretrain_batch` | softmax stage |
/// | `finetune_epochs`, `batch_pairs`, `partitions` | triplet stage; `batch_pairs` must divide by `partitions` |
/// | `scan_k` | partitions scanned for negatives, 0 = all |
/// | `miner` | `hard`, `semi-hard`, `random` |
/// | `alpha` | triplet margin |
/// | `lr_start`, `lr_end`, `momentum` | optimizer |
/// | `patience` | epochs without dev-EER improvement before stopping |
/// | `dev_negatives` | nontargets per dev trial group |
/// | `train_manifest`, `dev_manifest`, `eval_manifest` | data paths |
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: String,
    pub seed: u64,
    pub chunk_frames: usize,
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub finetune_epochs: usize,
    pub batch_pairs: usize,
    pub partitions: usize,
    pub scan_k: usize,
    pub miner: MinerMode,
    pub alpha: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub patience: usize,
    pub dev_negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_manifest: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: "rescnn".into(),
            seed: 0,
            chunk_frames: 200,
            pretrain_epochs: 10,
            pretrain_batch: 64,
            finetune_epochs: 15,
            batch_pairs: 128,
            partitions: 16,
            scan_k: 0,
            miner: MinerMode::Hard,
            alpha: 0.1,
            lr_start: 0.05,
            lr_end: 0.005,
            momentum: 0.99,
            patience: 3,
            dev_negatives: 99,
            train_manifest: None,
            dev_manifest: None,
            eval_manifest: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.chunk_frames == 0 || self.pretrain_batch == 0 || self.batch_pairs == 0 {
            return bad("chunk_frames, pretrain_batch and batch_pairs must be positive".into());
        }
        if self.partitions == 0 || self.batch_pairs % self.partitions != 0 {
            return bad(format!(
                "batch_pairs {} must be a positive multiple of partitions {}",
                self.batch_pairs, self.partitions
            ));
        }
        if self.scan_k > self.partitions {
            return bad(format!("scan_k {} exceeds partitions {}", self.scan_k, self.partitions));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.lr_start < 0.0 || self.lr_end < 0.0 || self.alpha < 0.0 {
            return bad("momentum must be in [0, 1); learning rates and alpha non-negative".into());
        }
        Ok(())
    }

    /// Partitions actually scanned per anchor.
    pub fn effective_scan_k(&self) -> usize {
        if self.scan_k == 0 {
            self.partitions
        } else {
            self.scan_k
        }
    }
}
