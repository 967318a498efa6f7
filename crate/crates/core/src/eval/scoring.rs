//! Cosine scoring, enrollment averaging and system fusion.

use std::collections::BTreeMap;

use super::trials::{Label, TrialSet};
use crate::error::{Error, Result};
use crate::model::SpeakerEmbedding;
use crate::nn::loss::dot;
use crate::nn::normalize::MIN_NORM;

/// Fused sums shorter than this are treated as antipodal.
pub const FUSION_MIN_NORM: f64 = 1e-6;

fn index(embs: &[SpeakerEmbedding]) -> BTreeMap<&str, &SpeakerEmbedding> {
    embs.iter().map(|e| (e.utt_id.as_str(), e)).collect()
}

fn lookup<'a>(idx: &BTreeMap<&str, &'a SpeakerEmbedding>, utt: &str) -> Result<&'a SpeakerEmbedding> {
    idx.get(utt)
        .copied()
        .ok_or_else(|| Error::Dataset(format!("no embedding for utterance {utt}")))
}

/// Mean of the first `n` embeddings, renormalized.
pub fn enroll(embs: &[SpeakerEmbedding], n: usize) -> Result<SpeakerEmbedding> {
    if embs.is_empty() {
        return Err(Error::Dataset("enrollment needs at least one embedding".into()));
    }
    if n == 0 || n > embs.len() {
        return Err(Error::Config(format!("enrollment size {n} outside 1..={}", embs.len())));
    }
    if n == 1 {
        return Ok(embs[0].clone());
    }
    let dim = embs[0].dim();
    let mut sum = vec![0.0f64; dim];
    for e in &embs[..n] {
        if e.dim() != dim {
            return Err(Error::dim("enroll", "mixed embedding dimensions"));
        }
        sum.iter_mut().zip(e.vector()).for_each(|(s, &v)| *s += v as f64);
    }
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= MIN_NORM {
        return Err(Error::DegenerateEmbedding { norm });
    }
    SpeakerEmbedding::new(
        embs[0].utt_id.clone(),
        embs[0].speaker_id.clone(),
        sum.iter().map(|v| (v / norm) as f32).collect(),
    )
}

/// `l2_normalize(a + b)`.
pub fn fuse_embeddings(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<SpeakerEmbedding> {
    if a.dim() != b.dim() {
        return Err(Error::dim("fuse_embeddings", format!("{} vs {}", a.dim(), b.dim())));
    }
    let sum: Vec<f64> = a.vector().iter().zip(b.vector()).map(|(&x, &y)| x as f64 + y as f64).collect();
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < FUSION_MIN_NORM {
        return Err(Error::DegenerateFusion { norm });
    }
    SpeakerEmbedding::new(
        a.utt_id.clone(),
        a.speaker_id.clone(),
        sum.iter().map(|v| (v / norm) as f32).collect(),
    )
}

/// Population z-normalization.
pub fn znorm(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::ZeroVariance);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    Ok(scores.iter().map(|s| (s - mean) / sd).collect())
}

/// z-normalize each system over all its trials, then add.
pub fn fuse_scores(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::dim("fuse_scores", format!("{} vs {} scores", a.len(), b.len())));
    }
    Ok(znorm(a)?.iter().zip(znorm(b)?).map(|(x, y)| x + y).collect())
}

/// Cosine score of every trial.
pub fn score_trials(trials: &TrialSet, embs: &[SpeakerEmbedding]) -> Result<Vec<f64>> {
    let idx = index(embs);
    trials
        .trials
        .iter()
        .map(|t| Ok(dot(lookup(&idx, &t.anchor)?.vector(), lookup(&idx, &t.candidate)?.vector())))
        .collect()
}

/// Scores with an `n`-utterance enrollment model in place of each anchor:
/// the anchor plus the first `n - 1` other utterances of its speaker (in
/// embedding order), never including the group's target candidate.
pub fn score_trials_enrolled(trials: &TrialSet, embs: &[SpeakerEmbedding], n: usize) -> Result<Vec<f64>> {
    if n <= 1 {
        return score_trials(trials, embs);
    }
    let idx = index(embs);
    let mut scores = Vec::with_capacity(trials.len());
    for g in trials.groups() {
        let anchor = lookup(&idx, &g[0].anchor)?;
        let spk = anchor
            .speaker_id
            .as_deref()
            .ok_or_else(|| Error::Dataset(format!("anchor {} has no speaker id", anchor.utt_id)))?;
        let target = g
            .iter()
            .find(|t| t.label == Label::Target)
            .map(|t| t.candidate.as_str())
            .unwrap_or_default();
        let mut pool = vec![anchor.clone()];
        pool.extend(
            embs.iter()
                .filter(|e| e.speaker_id.as_deref() == Some(spk) && e.utt_id != anchor.utt_id && e.utt_id != target)
                .take(n - 1)
                .cloned(),
        );
        if pool.len() < n {
            return Err(Error::Dataset(format!(
                "speaker {spk} has {} enrollment utterances besides the test one, {n} requested",
                pool.len()
            )));
        }
        let model = enroll(&pool, n)?;
        for t in g {
            scores.push(dot(model.vector(), lookup(&idx, &t.candidate)?.vector()));
        }
    }
    Ok(scores)
}
