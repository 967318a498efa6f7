//! Synthetic speakers for desk-scale experiments.
//!
//! A speaker is a fundamental frequency plus 3 to 5 resonance-like spectral
//! peaks between 300 and 3400 Hz, each placed on a mel filter center. An
//! utterance is a train of syllable-like bursts in which every peak is a
//! sinusoid (random phase, +-1% frequency jitter, +-3 dB per-syllable gain
//! jitter), plus white noise 20 dB below the voiced power, framed by
//! near-silent padding that the energy VAD should strip.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Manifest, UttRecord};
use crate::error::{Error, Result};
use crate::frontend::fbank::center_hz;
use crate::frontend::{write_wav, FbankConfig, Waveform};

/// Base of the synthetic recording timestamps (2020-09-13, Unix seconds).
pub const EPOCH_BASE: i64 = 1_600_000_000;
const PEAK_BAND_HZ: (f64, f64) = (300.0, 3400.0);
/// Minimum distance, in mel filters, between peaks that count as different.
pub const MIN_PEAK_SEPARATION: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    /// Length of the voiced part of each utterance.
    pub dur_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
    pub snr_db: f64,
    /// Near-silent padding before and after the voiced part.
    pub silence_s: f64,
    /// Recording timestamps are spread uniformly over this many days.
    pub span_days: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 10,
            utts_per_speaker: 20,
            dur_s: 3.0,
            sample_rate: 16000,
            seed: 0,
            snr_db: 20.0,
            silence_s: 0.2,
            span_days: 120.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeakerSpec {
    pub speaker_id: String,
    pub f0_hz: f64,
    /// Mel filter index of each peak (same filterbank as the frontend).
    pub peak_filters: Vec<usize>,
    pub peaks_hz: Vec<f64>,
    pub peak_gains: Vec<f64>,
    /// Relative per-utterance frequency jitter.
    pub jitter: f64,
}

impl SyntheticSpeakerSpec {
    /// True when some peak of `self` is at least [`MIN_PEAK_SEPARATION`]
    /// filters away from every peak of `other`.
    pub fn differs_from(&self, other: &Self) -> bool {
        self.peak_filters.iter().any(|&a| {
            other
                .peak_filters
                .iter()
                .all(|&b| a.abs_diff(b) >= MIN_PEAK_SEPARATION)
        })
    }
}

pub fn speaker_id(index: usize) -> String {
    format!("spk{index:03}")
}

pub fn utt_id(speaker: usize, utt: usize) -> String {
    format!("{}_u{utt:02}", speaker_id(speaker))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws speakers until each differs from all earlier ones.
pub fn speaker_specs(cfg: &SynthConfig) -> Result<Vec<SyntheticSpeakerSpec>> {
    if cfg.n_speakers < 2 {
        return Err(Error::Config(format!("need at least 2 speakers, got {}", cfg.n_speakers)));
    }
    let fb = FbankConfig::default();
    let nyquist = cfg.sample_rate as f64 / 2.0;
    let candidates: Vec<usize> = (0..fb.num_mel)
        .filter(|&k| {
            let c = center_hz(&fb, cfg.sample_rate, k);
            c >= PEAK_BAND_HZ.0 && c <= PEAK_BAND_HZ.1.min(nyquist * 0.95)
        })
        .collect();
    if candidates.len() < 10 {
        return Err(Error::Config(format!(
            "sample rate {} leaves only {} mel filters in the peak band",
            cfg.sample_rate,
            candidates.len()
        )));
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let mut specs: Vec<SyntheticSpeakerSpec> = Vec::with_capacity(cfg.n_speakers);
    for s in 0..cfg.n_speakers {
        let spec = (0..10_000)
            .find_map(|_| {
                let n = rng.gen_range(3..=5);
                let mut filters: Vec<usize> = sample(&mut rng, candidates.len(), n)
                    .into_iter()
                    .map(|i| candidates[i])
                    .collect();
                filters.sort_unstable();
                if filters.windows(2).any(|w| w[1] - w[0] < MIN_PEAK_SEPARATION) {
                    return None;
                }
                let spec = SyntheticSpeakerSpec {
                    speaker_id: speaker_id(s),
                    f0_hz: rng.gen_range(80.0..250.0),
                    peaks_hz: filters.iter().map(|&k| center_hz(&fb, cfg.sample_rate, k)).collect(),
                    peak_gains: filters.iter().map(|_| rng.gen_range(0.5..1.0)).collect(),
                    peak_filters: filters,
                    jitter: 0.01,
                };
                specs
                    .iter()
                    .all(|o| spec.differs_from(o) && o.differs_from(&spec))
                    .then_some(spec)
            })
            .ok_or_else(|| Error::Config(format!("could not place {} distinct speakers", cfg.n_speakers)))?;
        specs.push(spec);
    }
    Ok(specs)
}

/// Syllable envelope: 120-300 ms bursts separated by 40-120 ms gaps, with
/// 10 ms raised-cosine ramps. Returns the envelope and each sample's syllable.
fn envelope<R: Rng>(n: usize, sr: f64, rng: &mut R) -> (Vec<f64>, Vec<usize>) {
    let mut env = vec![0.0; n];
    let mut syl = vec![0; n];
    let ramp = (0.010 * sr) as usize;
    let mut pos = 0;
    let mut k = 0;
    while pos < n {
        let on = (rng.gen_range(0.12..0.30) * sr) as usize;
        let off = (rng.gen_range(0.04..0.12) * sr) as usize;
        for i in 0..on.min(n - pos) {
            let edge = i.min(on - 1 - i);
            env[pos + i] = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
        }
        let end = (pos + on + off).min(n);
        syl[pos..end].iter_mut().for_each(|s| *s = k);
        pos = end;
        k += 1;
    }
    (env, syl)
}

/// One utterance's samples (padding included), scaled to a 0.5 peak.
pub fn synth_utterance(spec: &SyntheticSpeakerSpec, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let sr = cfg.sample_rate as f64;
    let n = (cfg.dur_s * sr).round() as usize;
    let (env, syl) = envelope(n, sr, rng);
    let n_syl = syl.last().map_or(0, |s| s + 1);

    let mut tones: Vec<(f64, f64, Vec<f64>)> = spec
        .peaks_hz
        .iter()
        .zip(&spec.peak_gains)
        .map(|(&f, &g)| {
            let hz = f * (1.0 + rng.gen_range(-spec.jitter..=spec.jitter));
            let syl_gain = (0..n_syl).map(|_| g * 10f64.powf(rng.gen_range(-3.0..3.0) / 20.0)).collect();
            (hz, rng.gen_range(0.0..2.0 * PI), syl_gain)
        })
        .collect();
    let f0 = spec.f0_hz * (1.0 + rng.gen_range(-spec.jitter..=spec.jitter));
    for h in 1..=2 {
        tones.push((f0 * h as f64, rng.gen_range(0.0..2.0 * PI), vec![0.3 / h as f64; n_syl]));
    }

    let voice: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            env[i]
                * tones
                    .iter()
                    .map(|(hz, phase, gain)| gain[syl[i]] * (2.0 * PI * hz * t + phase).sin())
                    .sum::<f64>()
        })
        .collect();
    let power = voice.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
    let noise_std = (power / 10f64.powf(cfg.snr_db / 10.0)).sqrt();
    let pad = (cfg.silence_s * sr).round() as usize;
    let quiet_std = power.sqrt() * 1e-4;

    let mut out: Vec<f64> = Vec::with_capacity(n + 2 * pad);
    out.extend((0..pad).map(|_| quiet_std * rng.sample::<f64, _>(StandardNormal)));
    out.extend(voice.iter().map(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal)));
    out.extend((0..pad).map(|_| quiet_std * rng.sample::<f64, _>(StandardNormal)));
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    out.iter().map(|v| (0.5 * v / peak) as f32).collect()
}

/// Generates every utterance in memory. Records carry `wav/<spk>/<utt>.wav`
/// paths relative to wherever the corpus will be written.
pub fn synth_waveforms(cfg: &SynthConfig) -> Result<(Vec<SyntheticSpeakerSpec>, Vec<(UttRecord, Waveform)>)> {
    let specs = speaker_specs(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.n_speakers)
        .flat_map(|s| (0..cfg.utts_per_speaker).map(move |u| (s, u)))
        .collect();
    let span_s = cfg.span_days * 86_400.0;
    let out = jobs
        .par_iter()
        .map(|&(s, u)| {
            let mut rng = stream_rng(cfg.seed, 1 + (s * cfg.utts_per_speaker + u) as u64);
            let samples = synth_utterance(&specs[s], cfg, &mut rng);
            let timestamp = EPOCH_BASE + (rng.gen::<f64>() * span_s) as i64;
            let wave = Waveform::new(samples, cfg.sample_rate)?;
            let id = utt_id(s, u);
            let record = UttRecord {
                path: Path::new("wav").join(speaker_id(s)).join(format!("{id}.wav")),
                utt_id: id,
                speaker_id: speaker_id(s),
                duration_s: wave.duration_s(),
                timestamp: Some(timestamp),
            };
            Ok((record, wave))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((specs, out))
}

/// Writes WAVs under `out_dir/wav/` plus `out_dir/manifest.tsv` and
/// `out_dir/speakers.json`; returns the manifest with resolved paths.
pub fn synth_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    let (specs, utts) = synth_waveforms(cfg)?;
    let mut records = Vec::with_capacity(utts.len());
    for (mut rec, wave) in utts {
        rec.path = out_dir.join(&rec.path);
        let dir = rec.path.parent().expect("wav path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_wav(&rec.path, &wave)?;
        records.push(rec);
    }
    let manifest = Manifest::new(records)?;
    manifest.write(&out_dir.join("manifest.tsv"))?;
    let spk_path = out_dir.join("speakers.json");
    std::fs::write(&spk_path, serde_json::to_vec_pretty(&specs)?).map_err(|e| Error::io(&spk_path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_speakers: 3,
            utts_per_speaker: 2,
            dur_s: 0.5,
            sample_rate: 8000,
            seed: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn speakers_are_pairwise_distinct() {
        let cfg = SynthConfig {
            n_speakers: 60,
            ..small()
        };
        let specs = speaker_specs(&cfg).unwrap();
        for (i, a) in specs.iter().enumerate() {
            assert!((3..=5).contains(&a.peaks_hz.len()));
            assert!(a.peaks_hz.iter().all(|&f| (300.0..=3400.0).contains(&f)));
            for b in &specs[i + 1..] {
                assert!(a.differs_from(b) || b.differs_from(a));
            }
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let (_, a) = synth_waveforms(&small()).unwrap();
        let (_, b) = synth_waveforms(&small()).unwrap();
        assert_eq!(a, b);
        let (_, c) = synth_waveforms(&SynthConfig { seed: 5, ..small() }).unwrap();
        assert_ne!(a[0].1, c[0].1);
    }

    #[test]
    fn padding_is_quiet() {
        let (_, utts) = synth_waveforms(&small()).unwrap();
        let w = &utts[0].1;
        let pad = (0.2 * 8000.0) as usize;
        let rms = |s: &[f32]| (s.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
        let voiced = rms(&w.samples[pad..w.samples.len() - pad]);
        assert!(20.0 * (rms(&w.samples[..pad]) / voiced).log10() < -70.0);
        assert!((w.duration_s() - 0.9).abs() < 1e-9);
    }
}
