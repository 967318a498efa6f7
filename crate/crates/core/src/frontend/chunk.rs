use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkMode {
    /// One crop at a seeded random offset.
    Random,
    /// Consecutive crops covering the utterance; the last wraps to the start.
    Sequential,
}

fn crop(feat: &FeatureMatrix, start: usize, len: usize) -> Result<FeatureMatrix> {
    let t = feat.frames();
    let mut data = Vec::with_capacity(len * feat.dim());
    for i in 0..len {
        data.extend_from_slice(feat.row((start + i) % t));
    }
    feat.with_data(data)
}

/// Fixed-length crops of `len` frames. Utterances shorter than `len` are
/// wrap-padded (frames repeat from the beginning).
pub fn chunk(feat: &FeatureMatrix, len: usize, mode: ChunkMode, seed: u64) -> Result<Vec<FeatureMatrix>> {
    if len == 0 {
        return Err(Error::Config("chunk length must be at least one frame".into()));
    }
    let t = feat.frames();
    if t == 0 {
        return Err(Error::EmptyUtterance(feat.utt_id.clone()));
    }
    match mode {
        ChunkMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = if t >= len { rng.gen_range(0..=t - len) } else { rng.gen_range(0..t) };
            Ok(vec![crop(feat, start, len)?])
        }
        ChunkMode::Sequential => (0..t.div_ceil(len)).map(|i| crop(feat, i * len, len)).collect(),
    }
}
