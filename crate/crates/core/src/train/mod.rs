//! Softmax pretraining, triplet fine-tuning and negative mining.
//!
//! Every random choice is drawn from a stream derived with [`sub_seed`] from
//! the configured seed, so a run is reproducible regardless of thread count.

pub mod config;
pub mod miner;
pub mod pairs;
pub mod softmax;
pub mod triplet;

use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::{chunk, ChunkMode, FeatureMatrix};

pub use config::{MinerMode, TrainConfig};
pub use miner::{mine_negatives, miner_stats, miner_table, triplet_batch_loss, BatchPlan, MinerStats, Triplet, TripletBatch};
pub use pairs::{make_pairs, ApPair, PairSet};
pub use softmax::{pretrain_softmax, PretrainReport};
pub use triplet::{finetune_triplet, pair_batches, write_metrics_csv, EpochMetrics, FinetuneReport};

/// Derives an independent seed for a sub-stream. `parts` usually starts with
/// a stream tag followed by indices such as epoch and batch.
pub fn sub_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Linear decay from `lr_start` at step 0 to `lr_end` at `last_step`.
pub fn lr_schedule(step: usize, last_step: usize, lr_start: f64, lr_end: f64) -> f64 {
    if last_step == 0 {
        return lr_start;
    }
    let f = step.min(last_step) as f64 / last_step as f64;
    lr_start + f * (lr_end - lr_start)
}

/// A random crop of `frames` frames.
pub(crate) fn random_chunk(feat: &FeatureMatrix, frames: usize, seed: u64) -> Result<FeatureMatrix> {
    chunk(feat, frames, ChunkMode::Random, seed)?
        .pop()
        .ok_or_else(|| Error::EmptyUtterance(feat.utt_id.clone()))
}

/// Per-epoch checkpoint path inside `dir`.
pub fn epoch_checkpoint(dir: &Path, stage: &str, epoch: usize) -> std::path::PathBuf {
    dir.join(format!("{stage}-epoch{epoch:02}.ckpt"))
}
