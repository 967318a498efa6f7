//! Softmax pretraining with a classification head over training speakers.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{epoch_checkpoint, lr_schedule, random_chunk, sub_seed, TrainConfig};
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;
use crate::model::net::BN;
use crate::model::{backward, batch_input, forward, head_backward, head_logits, save_checkpoint, ModelParams};
use crate::nn::{softmax_xent, Mode, SgdMomentum};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PretrainReport {
    /// Mean cross-entropy of every step.
    pub step_loss: Vec<f64>,
    /// Mean cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
    /// Training-chunk accuracy per epoch, as a fraction.
    pub epoch_acc: Vec<f64>,
    /// Speaker label order of the head.
    pub speakers: Vec<String>,
}

/// Sorted speaker list and per-utterance labels.
pub fn speaker_labels(feats: &[FeatureMatrix]) -> (Vec<String>, Vec<usize>) {
    let mut speakers: Vec<String> = feats.iter().map(|f| f.speaker_id.clone()).collect();
    speakers.sort();
    speakers.dedup();
    let index: BTreeMap<&str, usize> = speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels = feats.iter().map(|f| index[f.speaker_id.as_str()]).collect();
    (speakers, labels)
}

/// Mean cross-entropy, correct count and logit gradient of one batch.
fn xent_batch(logits: &Tensor<f32>, labels: &[usize]) -> Result<(f64, usize, Tensor<f32>)> {
    let [b, k] = logits.dims2("softmax")?;
    let mut grad = Vec::with_capacity(b * k);
    let (mut loss, mut correct) = (0.0, 0);
    for (row, &y) in logits.data().chunks(k).zip(labels) {
        let (l, g) = softmax_xent(row, y)?;
        loss += l;
        let argmax = row
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > row[best] { i } else { best });
        correct += usize::from(argmax == y);
        grad.extend(g.into_iter().map(|v| v / b as f32));
    }
    Ok((loss / b as f64, correct, Tensor::from_vec(&[b, k], grad)?))
}

/// Trains trunk and head with cross-entropy on random crops, one crop per
/// utterance per epoch in a freshly shuffled order.
///
/// A head with one class per training speaker is attached when missing. If
/// the loss or a gradient stops being finite the parameters are restored to
/// the end of the last complete epoch and [`Error::Divergence`] is returned.
/// With `checkpoint_dir` set, the model is saved after each epoch.
pub fn pretrain_softmax(
    params: &mut ModelParams<f32>,
    feats: &[FeatureMatrix],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<PretrainReport> {
    cfg.validate()?;
    let (speakers, labels) = speaker_labels(feats);
    match params.head_classes() {
        None => params.attach_softmax_head(speakers.len(), sub_seed(cfg.seed, &[2]))?,
        Some(k) if k == speakers.len() => {}
        Some(k) => {
            return Err(Error::Config(format!(
                "softmax head has {k} classes, training set has {} speakers",
                speakers.len()
            )))
        }
    }
    let steps_per_epoch = feats.len().div_ceil(cfg.pretrain_batch);
    let last_step = (cfg.pretrain_epochs * steps_per_epoch).saturating_sub(1);
    let mut opt = SgdMomentum::new(cfg.momentum);
    let mut report = PretrainReport {
        speakers,
        ..Default::default()
    };
    let mut good = params.clone();
    let mut step = 0;
    for epoch in 0..cfg.pretrain_epochs {
        let mut order: Vec<usize> = (0..feats.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &[3, epoch as u64])));
        let (mut sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.pretrain_batch) {
            let chunks = batch
                .iter()
                .map(|&i| random_chunk(&feats[i], cfg.chunk_frames, sub_seed(cfg.seed, &[3, epoch as u64, i as u64])))
                .collect::<Result<Vec<_>>>()?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let x = batch_input(&chunks.iter().collect::<Vec<_>>())?;
            let fw = forward(params, &x, Mode::Train)?;
            let logits = head_logits(params, &fw.pre_norm)?;
            let (loss, ok, d_logits) = xent_batch(&logits, &y)?;
            let mut grads = Default::default();
            let d_pre = head_backward(params, &fw.pre_norm, &d_logits, &mut grads)?;
            let trunk = backward(params, &fw, None, Some(&d_pre))?;
            grads.extend(trunk);
            if !loss.is_finite() || grads.values().any(|g| g.ensure_finite("gradient").is_err()) {
                *params = good;
                return Err(Error::Divergence { step, loss });
            }
            let lr = lr_schedule(step, last_step, cfg.lr_start, cfg.lr_end);
            opt.step(params.tensors_mut(), &grads, lr)?;
            params.apply_bn_stats(&fw.bn_stats, &BN)?;
            report.step_loss.push(loss);
            sum += loss * batch.len() as f64;
            correct += ok;
            seen += batch.len();
            step += 1;
        }
        report.epoch_loss.push(sum / seen as f64);
        report.epoch_acc.push(correct as f64 / seen as f64);
        params.epoch += 1;
        log::info!(
            "pretrain epoch {}: loss {:.4} acc {:.3}",
            epoch + 1,
            sum / seen as f64,
            correct as f64 / seen as f64
        );
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(params, &epoch_checkpoint(dir, "pretrain", epoch + 1))?;
        }
        good = params.clone();
    }
    Ok(report)
}
