//! Log mel-filterbank energies.
//!
//! Frames of 25 ms every 10 ms, Hamming window, power spectrum, 64 triangular
//! filters equally spaced on the mel scale `2595 log10(1 + f/700)` between
//! 20 Hz and Nyquist, natural log with an additive floor.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Waveform, NUM_MEL};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FbankConfig {
    pub frame_ms: f64,
    pub shift_ms: f64,
    pub num_mel: usize,
    pub low_hz: f64,
    /// Upper edge; `None` means Nyquist.
    pub high_hz: Option<f64>,
    /// FFT length; `None` picks the smallest power of two that is at least
    /// four times the frame length.
    pub n_fft: Option<usize>,
    pub energy_floor: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            shift_ms: 10.0,
            num_mel: NUM_MEL,
            low_hz: 20.0,
            high_hz: None,
            n_fft: None,
            energy_floor: 1e-10,
        }
    }
}

impl FbankConfig {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_shift(&self, sample_rate: u32) -> usize {
        (self.shift_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    /// `floor((N - frame) / shift) + 1`, or 0 when shorter than one frame.
    pub fn num_frames(&self, num_samples: usize, sample_rate: u32) -> usize {
        let (len, shift) = (self.frame_len(sample_rate), self.frame_shift(sample_rate));
        if num_samples < len {
            0
        } else {
            (num_samples - len) / shift + 1
        }
    }

    pub fn fft_len(&self, sample_rate: u32) -> usize {
        self.n_fft
            .unwrap_or_else(|| (4 * self.frame_len(sample_rate)).next_power_of_two())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Filter edge frequencies on the mel grid: `num_mel + 2` points; filter `k`
/// rises from point `k`, peaks at `k + 1`, falls to `k + 2`.
pub fn mel_points(cfg: &FbankConfig, sample_rate: u32) -> Vec<f64> {
    let high = cfg.high_hz.unwrap_or(sample_rate as f64 / 2.0);
    let (lo, hi) = (hz_to_mel(cfg.low_hz), hz_to_mel(high));
    let n = cfg.num_mel + 1;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Center frequency in Hz of filter `k`.
pub fn center_hz(cfg: &FbankConfig, sample_rate: u32, k: usize) -> f64 {
    mel_to_hz(mel_points(cfg, sample_rate)[k + 1])
}

struct Filter {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Precomputed window, FFT plan and filter weights for one sample rate.
pub struct MelFilterbank {
    cfg: FbankConfig,
    sample_rate: u32,
    frame_len: usize,
    shift: usize,
    n_fft: usize,
    window: Vec<f64>,
    filters: Vec<Filter>,
    fft: Arc<dyn Fft<f64>>,
}

impl MelFilterbank {
    pub fn new(cfg: &FbankConfig, sample_rate: u32) -> Result<Self> {
        let frame_len = cfg.frame_len(sample_rate);
        let shift = cfg.frame_shift(sample_rate);
        let n_fft = cfg.fft_len(sample_rate);
        if frame_len == 0 || shift == 0 || n_fft < frame_len || cfg.num_mel == 0 {
            return Err(Error::Config(format!(
                "fbank: frame {frame_len}, shift {shift}, fft {n_fft}, filters {}",
                cfg.num_mel
            )));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if cfg.low_hz < 0.0 || cfg.high_hz.unwrap_or(nyquist) > nyquist || cfg.low_hz >= cfg.high_hz.unwrap_or(nyquist) {
            return Err(Error::Config("fbank: filter band outside (0, Nyquist]".into()));
        }
        let mels = mel_points(cfg, sample_rate);
        let bins = n_fft / 2 + 1;
        let bin_mel: Vec<f64> = (0..bins)
            .map(|b| hz_to_mel(b as f64 * sample_rate as f64 / n_fft as f64))
            .collect();
        let filters = (0..cfg.num_mel)
            .map(|k| {
                let (l, c, r) = (mels[k], mels[k + 1], mels[k + 2]);
                let w: Vec<(usize, f64)> = bin_mel
                    .iter()
                    .enumerate()
                    .filter_map(|(b, &m)| {
                        let v = ((m - l) / (c - l)).min((r - m) / (r - c));
                        (v > 0.0).then_some((b, v))
                    })
                    .collect();
                match w.first() {
                    Some(&(first, _)) => Filter {
                        first_bin: first,
                        weights: w.iter().map(|&(_, v)| v).collect(),
                    },
                    None => Filter {
                        first_bin: 0,
                        weights: Vec::new(),
                    },
                }
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            frame_len,
            shift,
            n_fft,
            window: hamming(frame_len),
            filters,
            fft: FftPlanner::new().plan_fft_forward(n_fft),
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// Weight of filter `k` on FFT bin `bin`.
    pub fn weight(&self, k: usize, bin: usize) -> f64 {
        let f = &self.filters[k];
        if bin < f.first_bin {
            return 0.0;
        }
        f.weights.get(bin - f.first_bin).copied().unwrap_or(0.0)
    }

    /// Log filterbank energies of one utterance.
    pub fn compute(&self, wave: &Waveform, utt_id: &str, speaker_id: &str) -> Result<FeatureMatrix> {
        if wave.sample_rate != self.sample_rate {
            return Err(Error::Audio(format!(
                "filterbank built for {} Hz, got {} Hz",
                self.sample_rate, wave.sample_rate
            )));
        }
        let frames = self.cfg.num_frames(wave.samples.len(), wave.sample_rate);
        if frames == 0 {
            return Err(Error::EmptyUtterance(format!(
                "{utt_id}: {} samples is shorter than one {}-sample frame",
                wave.samples.len(),
                self.frame_len
            )));
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0f64; self.n_fft / 2 + 1];
        let mut out = Vec::with_capacity(frames * self.filters.len());
        for t in 0..frames {
            let seg = &wave.samples[t * self.shift..t * self.shift + self.frame_len];
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = match seg.get(i) {
                    Some(&s) => Complex::new(s as f64 * self.window[i], 0.0),
                    None => Complex::new(0.0, 0.0),
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for f in &self.filters {
                let e: f64 = f
                    .weights
                    .iter()
                    .zip(&power[f.first_bin..])
                    .map(|(w, p)| w * p)
                    .sum();
                out.push((e + self.cfg.energy_floor).ln() as f32);
            }
        }
        FeatureMatrix::new(utt_id, speaker_id, self.cfg.shift_ms as f32, self.filters.len(), out)
    }
}

/// One-shot convenience over [`MelFilterbank`].
pub fn fbank(wave: &Waveform, cfg: &FbankConfig) -> Result<FeatureMatrix> {
    MelFilterbank::new(cfg, wave.sample_rate)?.compute(wave, "", "")
}
