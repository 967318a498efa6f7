//! Synthetic corpora and training runs shared by the integration tests.

#![allow(dead_code)]

use voxembed::data::{synth_waveforms, SynthConfig};
use voxembed::eval::{build_trials, compute_acc, compute_eer, score_trials, score_trials_enrolled, TrialSet};
use voxembed::frontend::{featurize, FbankConfig, FeatureMatrix, VadConfig};
use voxembed::model::{embed_all, ArchSpec, ModelParams, SpeakerEmbedding};
use voxembed::train::{finetune_triplet, pretrain_softmax, FinetuneReport, PretrainReport, TrainConfig};

/// Speakers `spk000..spk{n_train-1}` train, the rest evaluate.
pub struct Corpus {
    pub train: Vec<FeatureMatrix>,
    pub eval: Vec<FeatureMatrix>,
}

pub fn synth_features(cfg: &SynthConfig) -> Vec<FeatureMatrix> {
    let (_, waves) = synth_waveforms(cfg).unwrap();
    waves
        .iter()
        .map(|(r, w)| featurize(w, &r.utt_id, &r.speaker_id, &FbankConfig::default(), &VadConfig::default()).unwrap())
        .collect()
}

pub fn corpus(cfg: &SynthConfig, n_train: usize) -> Corpus {
    let boundary = voxembed::data::synth::speaker_id(n_train);
    let (train, eval) = synth_features(cfg).into_iter().partition(|f| f.speaker_id < boundary);
    Corpus { train, eval }
}

/// 40 training and 10 held-out speakers, 20 utterances each, 1.2 s at 8 kHz
/// with noise at 0 dB SNR.
pub fn toy_synth() -> SynthConfig {
    SynthConfig {
        n_speakers: 50,
        utts_per_speaker: 20,
        dur_s: 1.2,
        sample_rate: 8000,
        seed: 1,
        snr_db: 0.0,
        ..SynthConfig::default()
    }
}

/// Full-length recipe (10 + 15 epochs, margin 0.1, momentum 0.99, learning
/// rate 0.05 to 0.005) on short crops and small batches.
pub fn toy_train(arch: &str, seed: u64) -> TrainConfig {
    TrainConfig {
        arch: arch.into(),
        seed,
        chunk_frames: 64,
        pretrain_batch: 64,
        batch_pairs: 40,
        partitions: 4,
        ..TrainConfig::default()
    }
}

pub struct Run {
    pub params: ModelParams<f32>,
    pub pretrain: Option<PretrainReport>,
    pub finetune: FinetuneReport,
}

pub fn train(train: &[FeatureMatrix], cfg: &TrainConfig, pretrain: bool) -> Run {
    let mut params = ModelParams::build(ArchSpec::by_name(&cfg.arch).unwrap(), cfg.seed).unwrap();
    let pre = pretrain.then(|| {
        let r = pretrain_softmax(&mut params, train, cfg, None).unwrap();
        params.detach_softmax_head().unwrap();
        r
    });
    let finetune = finetune_triplet(&mut params, train, None, cfg, None).unwrap();
    Run {
        params,
        pretrain: pre,
        finetune,
    }
}

pub fn eval_trials(eval: &[FeatureMatrix], negatives: usize) -> TrialSet {
    let utts: Vec<(String, String)> = eval.iter().map(|f| (f.utt_id.clone(), f.speaker_id.clone())).collect();
    build_trials(&utts, negatives, 11).unwrap()
}

/// (EER %, ACC %) with `enroll`-utterance enrollment.
pub fn score(trials: &TrialSet, embs: &[SpeakerEmbedding], enroll: usize) -> (f64, f64) {
    let s = if enroll > 1 {
        score_trials_enrolled(trials, embs, enroll).unwrap()
    } else {
        score_trials(trials, embs).unwrap()
    };
    (compute_eer(&s, &trials.labels()).unwrap().eer, compute_acc(trials, &s).unwrap())
}

pub fn embed(params: &ModelParams<f32>, feats: &[FeatureMatrix]) -> Vec<SpeakerEmbedding> {
    embed_all(params, feats).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
