//! Manifests, speaker-disjoint splits and the synthetic corpus.

pub mod manifest;
pub mod split;
pub mod synth;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontend::{featurize, read_wav, speech_fbank, FbankConfig, FeatureMatrix, VadConfig};

pub use manifest::{parse_manifest, Manifest, ManifestStats, UttRecord};
pub use split::split_speakers;
pub use synth::{synth_corpus, synth_waveforms, SynthConfig, SyntheticSpeakerSpec};

/// Reads and featurizes every record, in manifest order. With `normalize`
/// false the features stop before CMVN.
pub fn featurize_manifest(
    manifest: &Manifest,
    fbank_cfg: &FbankConfig,
    vad_cfg: &VadConfig,
    normalize: bool,
) -> Result<Vec<FeatureMatrix>> {
    manifest
        .records
        .par_iter()
        .map(|r| {
            let wave = read_wav(&r.path)?;
            let f = if normalize { featurize } else { speech_fbank };
            f(&wave, &r.utt_id, &r.speaker_id, fbank_cfg, vad_cfg)
        })
        .collect()
}

/// Identification accuracy of a nearest-centroid classifier on per-utterance
/// feature means: centroids from `train`, Euclidean distance, ties go to the
/// first speaker in sorted order.
pub fn nearest_centroid_accuracy(train: &[FeatureMatrix], test: &[FeatureMatrix]) -> Result<f64> {
    use std::collections::BTreeMap;
    if test.is_empty() {
        return Err(Error::Dataset("no test utterances".into()));
    }
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for f in train {
        let (s, n) = sums.entry(&f.speaker_id).or_insert_with(|| (vec![0.0; f.dim()], 0));
        s.iter_mut().zip(f.mean()).for_each(|(a, b)| *a += b);
        *n += 1;
    }
    let centroids: Vec<(&str, Vec<f64>)> = sums
        .into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let correct = test
        .iter()
        .filter(|f| {
            let m = f.mean();
            let dist = |c: &[f64]| c.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = centroids
                .iter()
                .fold(None::<(&str, f64)>, |best, (k, c)| match best {
                    Some((_, d)) if d <= dist(c) => best,
                    _ => Some((k, dist(c))),
                });
            best.map(|(k, _)| k) == Some(f.speaker_id.as_str())
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}
