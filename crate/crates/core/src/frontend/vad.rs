//! Frame-level energy VAD. A frame is speech when its log energy is within
//! `rel_db` of the loudest frame and above the absolute floor.

use serde::{Deserialize, Serialize};

use super::{FbankConfig, Waveform};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    pub rel_db: f64,
    /// dB relative to a full-scale square wave (mean square 1).
    pub floor_db: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            rel_db: 30.0,
            floor_db: -60.0,
        }
    }
}

/// `10 log10(mean square)` per frame, on the same framing as the fbank.
pub fn frame_log_energy(wave: &Waveform, cfg: &FbankConfig) -> Result<Vec<f64>> {
    let len = cfg.frame_len(wave.sample_rate);
    let shift = cfg.frame_shift(wave.sample_rate);
    let frames = cfg.num_frames(wave.samples.len(), wave.sample_rate);
    if frames == 0 {
        return Err(Error::EmptyUtterance("audio shorter than one frame".into()));
    }
    Ok((0..frames)
        .map(|t| {
            let seg = &wave.samples[t * shift..t * shift + len];
            let ms = seg.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / len as f64;
            10.0 * (ms + 1e-30).log10()
        })
        .collect())
}

/// Speech mask over frames. Errors when nothing survives.
pub fn energy_vad(energy_db: &[f64], cfg: &VadConfig) -> Result<Vec<bool>> {
    let max = energy_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mask: Vec<bool> = energy_db
        .iter()
        .map(|&e| e >= max - cfg.rel_db && e >= cfg.floor_db)
        .collect();
    if !mask.iter().any(|&k| k) {
        return Err(Error::EmptyUtterance(format!(
            "energy VAD removed all {} frames (peak {max:.1} dB, floor {} dB)",
            energy_db.len(),
            cfg.floor_db
        )));
    }
    Ok(mask)
}
