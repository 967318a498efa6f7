//! Raw audio to normalized 64-dim log-mel feature chunks.

pub mod cache;
pub mod chunk;
pub mod cmvn;
pub mod fbank;
pub mod vad;
pub mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{read_feature_cache, write_feature_cache};
pub use chunk::{chunk, ChunkMode};
pub use cmvn::cmvn;
pub use fbank::{fbank, FbankConfig, MelFilterbank};
pub use vad::{energy_vad, frame_log_energy, VadConfig};
pub use wav::{read_wav, write_wav, Waveform};

/// Log-mel coefficients per frame.
pub const NUM_MEL: usize = 64;

/// `T x dim` log-mel features for one utterance (or chunk of one).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub utt_id: String,
    pub speaker_id: String,
    pub frame_shift_ms: f32,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(
        utt_id: impl Into<String>,
        speaker_id: impl Into<String>,
        frame_shift_ms: f32,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::dim(
                "feature matrix",
                format!("{} values is not a multiple of dim {dim}", data.len()),
            ));
        }
        Ok(Self {
            utt_id: utt_id.into(),
            speaker_id: speaker_id.into(),
            frame_shift_ms,
            dim,
            data,
        })
    }

    /// Same metadata, new frames.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(
            self.utt_id.clone(),
            self.speaker_id.clone(),
            self.frame_shift_ms,
            self.dim,
            data,
        )
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.dim)
    }

    /// Keeps frames where `mask` is true, preserving order.
    pub fn select(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.frames() {
            return Err(Error::dim(
                "frame mask",
                format!("{} mask entries for {} frames", mask.len(), self.frames()),
            ));
        }
        let data = self
            .rows()
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .flat_map(|(r, _)| r.iter().copied())
            .collect();
        self.with_data(data)
    }

    /// Per-coefficient mean over frames.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, &v) in m.iter_mut().zip(r) {
                *a += v as f64;
            }
        }
        let t = self.frames().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= t);
        m
    }
}

/// Full frontend for one utterance: fbank, energy VAD mask, CMVN.
/// Log-mel frames of the speech portion, before normalization.
pub fn speech_fbank(
    wave: &Waveform,
    utt_id: &str,
    speaker_id: &str,
    fbank_cfg: &FbankConfig,
    vad_cfg: &VadConfig,
) -> Result<FeatureMatrix> {
    let bank = MelFilterbank::new(fbank_cfg, wave.sample_rate)?;
    let raw = bank.compute(wave, utt_id, speaker_id)?;
    let energy = frame_log_energy(wave, fbank_cfg)?;
    let mask = energy_vad(&energy, vad_cfg)?;
    raw.select(&mask)
}

/// Fbank, energy VAD, then CMVN.
pub fn featurize(
    wave: &Waveform,
    utt_id: &str,
    speaker_id: &str,
    fbank_cfg: &FbankConfig,
    vad_cfg: &VadConfig,
) -> Result<FeatureMatrix> {
    cmvn(&speech_fbank(wave, utt_id, speaker_id, fbank_cfg, vad_cfg)?)
}
