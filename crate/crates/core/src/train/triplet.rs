//! Triplet fine-tuning with partitioned negative mining.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::miner::{mine_negatives, triplet_batch_loss, BatchPlan, TripletBatch};
use super::{epoch_checkpoint, lr_schedule, make_pairs, random_chunk, sub_seed, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{build_trials, compute_acc, compute_eer, score_trials, TrialSet};
use crate::frontend::FeatureMatrix;
use crate::model::net::BN;
use crate::model::{backward, batch_input, embed_all, forward, save_checkpoint, ModelParams};
use crate::nn::{Mode, SgdMomentum};

/// Crops for one batch: rows `2i` and `2i + 1` are the anchor and positive of
/// pair `i`, spoken by `speakers[i]`.
#[derive(Clone, Debug)]
pub struct PairBatch {
    pub chunks: Vec<FeatureMatrix>,
    pub speakers: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub mean_sap: f64,
    pub mean_san: f64,
    pub prob_hard: f64,
    pub dev_eer: Option<f64>,
    pub dev_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FinetuneReport {
    pub epochs: Vec<EpochMetrics>,
    /// Mean loss of every step.
    pub step_loss: Vec<f64>,
    /// Epoch whose parameters were kept (the last one without a dev set).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// The epoch's anchor-positive pairs cropped and grouped into batches of
/// `batch_pairs`. A short final batch is dropped when a full one exists;
/// otherwise it is cut to a multiple of the partition count.
pub fn pair_batches(feats: &[FeatureMatrix], cfg: &TrainConfig, epoch: usize) -> Result<Vec<PairBatch>> {
    let speakers: Vec<&str> = feats.iter().map(|f| f.speaker_id.as_str()).collect();
    let pairs = make_pairs(&speakers, cfg.seed, epoch)?;
    let mut batches = Vec::new();
    let full = pairs.pairs.len() >= cfg.batch_pairs;
    for (b, group) in pairs.pairs.chunks(cfg.batch_pairs).enumerate() {
        let n = group.len() - group.len() % cfg.partitions;
        if n == 0 || (full && group.len() < cfg.batch_pairs) {
            continue;
        }
        let mut chunks = Vec::with_capacity(2 * n);
        for (j, p) in group[..n].iter().enumerate() {
            let pair_id = (b * cfg.batch_pairs + j) as u64;
            for (side, utt) in [p.anchor, p.positive].into_iter().enumerate() {
                let seed = sub_seed(cfg.seed, &[6, epoch as u64, pair_id, side as u64]);
                chunks.push(random_chunk(&feats[utt], cfg.chunk_frames, seed)?);
            }
        }
        batches.push(PairBatch {
            chunks,
            speakers: group[..n].iter().map(|p| p.speaker.clone()).collect(),
        });
    }
    if batches.is_empty() {
        return Err(Error::Dataset(format!(
            "{} pairs cannot fill a batch split into {} partitions",
            pairs.pairs.len(),
            cfg.partitions
        )));
    }
    Ok(batches)
}

/// One synchronous update: a joint forward pass over all partitions, mining,
/// and a single optimizer step on the gradient of the batch-mean loss.
pub fn train_step(
    params: &mut ModelParams<f32>,
    opt: &mut SgdMomentum<f32>,
    batch: &PairBatch,
    plan: &BatchPlan,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<(f64, TripletBatch)> {
    let x = batch_input(&batch.chunks.iter().collect::<Vec<_>>())?;
    let fw = forward(params, &x, Mode::Train)?;
    let spk: Vec<&str> = batch.speakers.iter().map(String::as_str).collect();
    let mined = mine_negatives(&fw.embeddings, &spk, plan, cfg.miner, cfg.effective_scan_k(), cfg.alpha)?;
    let (loss, d_emb) = triplet_batch_loss(&fw.embeddings, &mined, cfg.alpha)?;
    let grads = backward(params, &fw, Some(&d_emb), None)?;
    if !loss.is_finite() || grads.values().any(|g| g.ensure_finite("gradient").is_err()) {
        return Err(Error::Divergence {
            step: plan.batch,
            loss,
        });
    }
    opt.step(params.tensors_mut(), &grads, lr)?;
    params.apply_bn_stats(&fw.bn_stats, &BN)?;
    Ok((loss, mined))
}

/// Dev trials with as many negatives per group as requested and available.
fn dev_trials(dev: &[FeatureMatrix], cfg: &TrainConfig) -> Result<TrialSet> {
    let utts: Vec<(String, String)> = dev.iter().map(|f| (f.utt_id.clone(), f.speaker_id.clone())).collect();
    let fewest_others = utts
        .iter()
        .map(|(_, s)| utts.iter().filter(|(_, o)| o != s).count())
        .min()
        .unwrap_or(0);
    build_trials(&utts, cfg.dev_negatives.min(fewest_others), sub_seed(cfg.seed, &[7]))
}

/// Dev EER and ACC in percent.
pub fn dev_scores(params: &ModelParams<f32>, dev: &[FeatureMatrix], trials: &TrialSet) -> Result<(f64, f64)> {
    let embs = embed_all(params, dev)?;
    let scores = score_trials(trials, &embs)?;
    Ok((compute_eer(&scores, &trials.labels())?.eer, compute_acc(trials, &scores)?))
}

/// Fine-tunes the trunk with the triplet loss. The softmax head must already
/// be detached.
///
/// With a dev set the EER is measured after each epoch, training stops once
/// it has not improved for `patience` epochs, and the best parameters are
/// restored. Divergence restores the last complete epoch and returns
/// [`Error::Divergence`].
pub fn finetune_triplet(
    params: &mut ModelParams<f32>,
    feats: &[FeatureMatrix],
    dev: Option<&[FeatureMatrix]>,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<FinetuneReport> {
    cfg.validate()?;
    if let Some(k) = params.head_classes() {
        return Err(Error::Config(format!(
            "detach the {k}-class softmax head before triplet fine-tuning"
        )));
    }
    let trials = dev.map(|d| dev_trials(d, cfg)).transpose()?;
    let steps_per_epoch = pair_batches(feats, cfg, 0)?.len();
    let last_step = (cfg.finetune_epochs * steps_per_epoch).saturating_sub(1);
    let mut opt = SgdMomentum::new(cfg.momentum);
    let mut report = FinetuneReport::default();
    let mut good = params.clone();
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let mut since_best = 0;
    let mut step = 0;
    for epoch in 0..cfg.finetune_epochs {
        let (mut loss_sum, mut sap, mut san, mut hard, mut anchors) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for (b, batch) in pair_batches(feats, cfg, epoch)?.iter().enumerate() {
            let plan = BatchPlan::new(batch.speakers.len(), cfg.partitions, cfg.seed, epoch, b)?;
            let lr = lr_schedule(step, last_step, cfg.lr_start, cfg.lr_end);
            let (loss, mined) = match train_step(params, &mut opt, batch, &plan, cfg, lr) {
                Ok(r) => r,
                Err(Error::Divergence { loss, .. }) => {
                    *params = good;
                    return Err(Error::Divergence { step, loss });
                }
                Err(e) => return Err(e),
            };
            let n = mined.triplets.len() as f64;
            report.step_loss.push(loss);
            loss_sum += loss * n;
            sap += mined.mean_sap() * n;
            san += mined.mean_san() * n;
            hard += mined.prob_hard * n;
            anchors += mined.triplets.len();
            step += 1;
        }
        let a = anchors as f64;
        params.epoch += 1;
        let (dev_eer, dev_acc) = match (dev, &trials) {
            (Some(d), Some(t)) => {
                let (eer, acc) = dev_scores(params, d, t)?;
                (Some(eer), Some(acc))
            }
            _ => (None, None),
        };
        let m = EpochMetrics {
            epoch: epoch + 1,
            loss: loss_sum / a,
            mean_sap: sap / a,
            mean_san: san / a,
            prob_hard: hard / a,
            dev_eer,
            dev_acc,
        };
        log::info!(
            "finetune epoch {}: loss {:.4} sap {:.3} san {:.3} hard {:.3} dev_eer {:?}",
            m.epoch,
            m.loss,
            m.mean_sap,
            m.mean_san,
            m.prob_hard,
            m.dev_eer
        );
        report.epochs.push(m);
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(params, &epoch_checkpoint(dir, "finetune", epoch + 1))?;
        }
        good = params.clone();
        report.best_epoch = epoch + 1;
        if let Some(eer) = dev_eer {
            if best.as_ref().map_or(true, |(b, _, _)| eer < *b) {
                best = Some((eer, epoch + 1, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    report.stopped_early = epoch + 1 < cfg.finetune_epochs;
                    break;
                }
            }
        }
    }
    if let Some((_, e, p)) = best {
        report.best_epoch = e;
        *params = p;
    }
    Ok(report)
}

/// Per-epoch metrics as CSV; dev columns are empty without a dev set.
pub fn write_metrics_csv(path: &Path, epochs: &[EpochMetrics]) -> Result<()> {
    let mut s = String::from("epoch,loss,mean_sap,mean_san,prob_hard,dev_eer,dev_acc\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for m in epochs {
        writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{},{}",
            m.epoch,
            m.loss,
            m.mean_sap,
            m.mean_san,
            m.prob_hard,
            opt(m.dev_eer),
            opt(m.dev_acc)
        )
        .expect("writing to a String");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
