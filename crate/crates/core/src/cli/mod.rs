//! The `voxembed` command line. Every subcommand reads and writes artifacts
//! inside one working directory (`--out`):
//!
//! | artifact | producer |
//! |---|---|
//! | `manifest.tsv`, `{train,dev,eval}.tsv`, `wav/` | `synth` |
//! | `feats/{train,dev,eval}.vxfc` | `featurize` |
//! | `pretrained.ckpt`, `pretrain_loss.csv`, `checkpoints/` | `pretrain` |
//! | `model.ckpt`, `metrics.csv` | `finetune` |
//! | `embeddings.jsonl` | `embed` |
//! | `trials.tsv`, `report.json`, `det.csv` | `evaluate` |
//! | `fusion.json` | `fuse` |
//! | `miner_stats.json` | `mine-stats` |
//!
//! Each run also leaves `<subcommand>.config.toml` (the resolved
//! configuration) and `<subcommand>.seed.json`.

pub mod config;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{EvalConfig, MineConfig, RunConfig, SplitConfig};

use crate::data::{featurize_manifest, parse_manifest, split_speakers, synth_corpus, Manifest};
use crate::error::{Error, Result};
use crate::eval::{
    build_trials, fuse_embeddings, fuse_scores, results_table, score_trials, score_trials_enrolled,
    time_span_cohorts, EvalReport, TrialSet,
};
use crate::frontend::{read_feature_cache, write_feature_cache, FeatureMatrix};
use crate::model::{
    batch_input, embed_all, forward, load_checkpoint, read_embeddings, save_checkpoint, write_embeddings_jsonl,
    ArchSpec, ModelParams, SpeakerEmbedding,
};
use crate::nn::Mode;
use crate::train::{
    finetune_triplet, miner_stats, miner_table, pair_batches, pretrain_softmax, write_metrics_csv,
    MinerMode,
};

const SPLITS: [&str; 3] = ["train", "dev", "eval"];

#[derive(Debug, Parser)]
#[command(name = "voxembed", version, about = "Speaker embedding training and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Working directory for all artifacts.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    #[arg(long, global = true, value_parser = ["rescnn", "gru", "toy-rescnn", "toy-gru"])]
    pub arch: Option<String>,
    #[arg(long, global = true, value_parser = ["hard", "semi-hard", "random"])]
    pub miner: Option<String>,
    /// Partitions scanned for negatives (0 = all).
    #[arg(long, global = true)]
    pub scan_k: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Config overrides such as `train.alpha=0.2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus and its speaker-disjoint splits.
    Synth,
    /// Compute normalized log-mel features for each split.
    Featurize {
        /// Featurize this manifest as the eval split instead of `eval.tsv`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Softmax pretraining on the train split.
    Pretrain,
    /// Triplet fine-tuning, starting from `pretrained.ckpt`.
    Finetune {
        /// Start from a fresh model instead of the pretrained one.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Embed the eval split with `model.ckpt`.
    Embed {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score the eval trials and report EER and ACC.
    Evaluate,
    /// Fuse this run with another run directory at score and embedding level.
    Fuse {
        /// Working directory of the second system.
        #[arg(long)]
        with: PathBuf,
    },
    /// Hard-negative probability and mining cost per number of scanned partitions.
    MineStats {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Featurize { .. } => "featurize",
            Command::Pretrain => "pretrain",
            Command::Finetune { .. } => "finetune",
            Command::Embed { .. } => "embed",
            Command::Evaluate => "evaluate",
            Command::Fuse { .. } => "fuse",
            Command::MineStats { .. } => "mine-stats",
        }
    }
}

/// Defaults, then the config file, then `--set` overrides, then flags.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for o in &common.overrides {
        cfg.set(o)?;
    }
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    if let Some(a) = &common.arch {
        cfg.train.arch = a.clone();
    }
    if let Some(m) = &common.miner {
        cfg.train.miner = m.parse::<MinerMode>()?;
    }
    if let Some(k) = common.scan_k {
        cfg.train.scan_k = k;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SeedRecord<'a> {
    subcommand: &'a str,
    train_seed: u64,
    synth_seed: u64,
    split_seed: u64,
    trial_seed: u64,
}

fn write_run_record(out: &Path, cmd: &str, cfg: &RunConfig) -> Result<()> {
    let p = out.join(format!("{cmd}.config.toml"));
    std::fs::write(&p, cfg.to_toml()).map_err(|e| Error::io(&p, e))?;
    let rec = SeedRecord {
        subcommand: cmd,
        train_seed: cfg.train.seed,
        synth_seed: cfg.synth.seed,
        split_seed: cfg.split.seed,
        trial_seed: cfg.eval.trial_seed,
    };
    let p = out.join(format!("{cmd}.seed.json"));
    std::fs::write(&p, serde_json::to_string_pretty(&rec)? + "\n").map_err(|e| Error::io(&p, e))
}

/// Fails with a message naming `producer` when `path` does not exist.
fn require(path: PathBuf, producer: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, producer })
    }
}

fn feats_path(out: &Path, split: &str) -> PathBuf {
    out.join("feats").join(format!("{split}.vxfc"))
}

fn load_feats(out: &Path, split: &str) -> Result<Vec<FeatureMatrix>> {
    read_feature_cache(&require(feats_path(out, split), "featurize")?)
}

/// Runs one subcommand and returns what it prints.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve_config(&cli.common)?;
    let out = cli.common.out.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if cfg.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    let name = cli.command.name();
    write_run_record(out, name, &cfg)?;
    match &cli.command {
        Command::Synth => cmd_synth(out, &cfg),
        Command::Featurize { manifest } => cmd_featurize(out, &cfg, manifest.as_deref()),
        Command::Pretrain => cmd_pretrain(out, &cfg),
        Command::Finetune { from_scratch } => cmd_finetune(out, &cfg, *from_scratch),
        Command::Embed { checkpoint } => cmd_embed(out, checkpoint.as_deref()),
        Command::Evaluate => cmd_evaluate(out, &cfg),
        Command::Fuse { with } => cmd_fuse(out, with, &cfg),
        Command::MineStats { checkpoint } => cmd_mine_stats(out, &cfg, checkpoint.as_deref()),
    }
}

pub fn cmd_synth(out: &Path, cfg: &RunConfig) -> Result<String> {
    let manifest = synth_corpus(&cfg.synth, out)?;
    let splits = split_speakers(&manifest, cfg.split.fractions, cfg.split.seed)?;
    let mut s = format!("{}\n", manifest.stats());
    for (name, m) in SPLITS.iter().zip(&splits) {
        m.write(&out.join(format!("{name}.tsv")))?;
        writeln!(s, "{name}: {} speakers, {} utterances", m.speakers().len(), m.len()).expect("string");
    }
    Ok(s)
}

pub fn cmd_featurize(out: &Path, cfg: &RunConfig, eval_manifest: Option<&Path>) -> Result<String> {
    let dir = out.join("feats");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut s = String::new();
    for split in SPLITS {
        let path = match (split, eval_manifest) {
            ("eval", Some(p)) => p.to_path_buf(),
            _ => require(out.join(format!("{split}.tsv")), "synth")?,
        };
        let manifest = parse_manifest(&path)?;
        let feats = featurize_manifest(&manifest, &cfg.fbank, &cfg.vad, true)?;
        write_feature_cache(&feats_path(out, split), &feats)?;
        let frames: usize = feats.iter().map(FeatureMatrix::frames).sum();
        writeln!(s, "{split}: {} utterances, {frames} speech frames", feats.len()).expect("string");
    }
    Ok(s)
}

pub fn cmd_pretrain(out: &Path, cfg: &RunConfig) -> Result<String> {
    let feats = load_feats(out, "train")?;
    let arch = ArchSpec::by_name(&cfg.train.arch)?;
    let mut params = ModelParams::build(arch, cfg.train.seed)?;
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let report = pretrain_softmax(&mut params, &feats, &cfg.train, Some(&ckpt_dir))?;
    save_checkpoint(&params, &out.join("pretrained.ckpt"))?;
    let mut csv = String::from("epoch,loss,acc\n");
    for (i, (l, a)) in report.epoch_loss.iter().zip(&report.epoch_acc).enumerate() {
        writeln!(csv, "{},{l:.6},{a:.6}", i + 1).expect("string");
    }
    let p = out.join("pretrain_loss.csv");
    std::fs::write(&p, &csv).map_err(|e| Error::io(&p, e))?;
    Ok(csv)
}

pub fn cmd_finetune(out: &Path, cfg: &RunConfig, from_scratch: bool) -> Result<String> {
    let feats = load_feats(out, "train")?;
    let dev = match feats_path(out, "dev") {
        p if p.exists() => Some(read_feature_cache(&p)?).filter(|d| !d.is_empty()),
        _ => None,
    };
    let mut params = if from_scratch {
        ModelParams::build(ArchSpec::by_name(&cfg.train.arch)?, cfg.train.seed)?
    } else {
        let p = load_checkpoint(&require(out.join("pretrained.ckpt"), "pretrain")?)?;
        if p.arch.name != cfg.train.arch {
            return Err(Error::ArchMismatch {
                expected: cfg.train.arch.clone(),
                found: p.arch.name.clone(),
            });
        }
        p
    };
    if params.head_classes().is_some() {
        params.detach_softmax_head()?;
    }
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let report = finetune_triplet(&mut params, &feats, dev.as_deref(), &cfg.train, Some(&ckpt_dir))?;
    save_checkpoint(&params, &out.join("model.ckpt"))?;
    let metrics = out.join("metrics.csv");
    write_metrics_csv(&metrics, &report.epochs)?;
    let mut s = std::fs::read_to_string(&metrics).map_err(|e| Error::io(&metrics, e))?;
    writeln!(s, "kept epoch {}{}", report.best_epoch, if report.stopped_early { " (early stop)" } else { "" })
        .expect("string");
    Ok(s)
}

pub fn cmd_embed(out: &Path, checkpoint: Option<&Path>) -> Result<String> {
    let ckpt = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => require(out.join("model.ckpt"), "finetune")?,
    };
    let params = load_checkpoint(&ckpt)?;
    let feats = load_feats(out, "eval")?;
    let embs = embed_all(&params, &feats)?;
    write_embeddings_jsonl(&out.join("embeddings.jsonl"), &embs)?;
    Ok(format!("{} embeddings of dimension {}\n", embs.len(), params.arch.embed_dim))
}

fn load_embeddings(dir: &Path) -> Result<Vec<SpeakerEmbedding>> {
    read_embeddings(&require(dir.join("embeddings.jsonl"), "embed")?)
}

/// The eval trial list, built on first use and reused afterwards.
fn trials_for(out: &Path, embs: &[SpeakerEmbedding], cfg: &EvalConfig) -> Result<TrialSet> {
    let path = out.join("trials.tsv");
    if path.exists() {
        return TrialSet::read(&path);
    }
    let utts = embs
        .iter()
        .map(|e| {
            let spk = e
                .speaker_id
                .clone()
                .ok_or_else(|| Error::Dataset(format!("embedding {} has no speaker id", e.utt_id)))?;
            Ok((e.utt_id.clone(), spk))
        })
        .collect::<Result<Vec<_>>>()?;
    let trials = build_trials(&utts, cfg.negatives, cfg.trial_seed)?;
    trials.write(&path)?;
    Ok(trials)
}

fn system_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn cmd_evaluate(out: &Path, cfg: &RunConfig) -> Result<String> {
    let embs = load_embeddings(out)?;
    let trials = trials_for(out, &embs, &cfg.eval)?;
    let scores = score_trials_enrolled(&trials, &embs, cfg.eval.enroll)?;
    let system = system_name(out);
    let report = EvalReport::from_scores(&system, "all", &trials, &scores)?;
    report.write_json(&out.join("report.json"))?;
    report.write_det_csv(&out.join("det.csv"))?;
    let mut rows = vec![report];
    if !cfg.eval.cohort_edges_days.is_empty() {
        let manifest: Manifest = parse_manifest(&require(out.join("eval.tsv"), "synth")?)?;
        let cohorts = time_span_cohorts(&trials, &manifest, &cfg.eval.cohort_edges_days);
        let mut lo = 0.0;
        for (cohort, &hi) in cohorts.iter().zip(&cfg.eval.cohort_edges_days) {
            let label = format!("{system} [{lo}, {hi}) days");
            lo = hi;
            if cohort.is_empty() {
                continue;
            }
            let s = score_trials_enrolled(cohort, &embs, cfg.eval.enroll)?;
            rows.push(EvalReport::from_scores(&label, &label, cohort, &s)?);
        }
    }
    Ok(results_table(&rows))
}

pub fn cmd_fuse(out: &Path, other: &Path, cfg: &RunConfig) -> Result<String> {
    let a = load_embeddings(out)?;
    let b = load_embeddings(other)?;
    let trials = trials_for(out, &a, &cfg.eval)?;
    let (na, nb) = (system_name(out), system_name(other));
    let sa = score_trials(&trials, &a)?;
    let sb = score_trials(&trials, &b)?;
    let by_utt: std::collections::BTreeMap<&str, &SpeakerEmbedding> =
        b.iter().map(|e| (e.utt_id.as_str(), e)).collect();
    let fused = a
        .iter()
        .map(|e| {
            let other = by_utt
                .get(e.utt_id.as_str())
                .ok_or_else(|| Error::Dataset(format!("{nb} has no embedding for {}", e.utt_id)))?;
            fuse_embeddings(e, other)
        })
        .collect::<Result<Vec<_>>>()?;
    let reports = vec![
        EvalReport::from_scores(&na, "all", &trials, &sa)?,
        EvalReport::from_scores(&nb, "all", &trials, &sb)?,
        EvalReport::from_scores(&format!("{na} + {nb} (score)"), "all", &trials, &fuse_scores(&sa, &sb)?)?,
        EvalReport::from_scores(&format!("{na} + {nb} (embedding)"), "all", &trials, &score_trials(&trials, &fused)?)?,
    ];
    let p = out.join("fusion.json");
    std::fs::write(&p, serde_json::to_string_pretty(&reports)? + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(results_table(&reports))
}

/// Infer-mode embeddings of the first training batches, with pair speakers.
pub fn stats_batches(
    params: &ModelParams<f32>,
    feats: &[FeatureMatrix],
    cfg: &RunConfig,
) -> Result<Vec<(crate::Tensor<f32>, Vec<String>)>> {
    pair_batches(feats, &cfg.train, 0)?
        .into_iter()
        .take(cfg.mine.batches.max(1))
        .map(|b| {
            let x = batch_input(&b.chunks.iter().collect::<Vec<_>>())?;
            Ok((forward(params, &x, Mode::Infer)?.embeddings, b.speakers))
        })
        .collect()
}

pub fn cmd_mine_stats(out: &Path, cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<String> {
    let ckpt = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => require(out.join("model.ckpt"), "finetune")?,
    };
    let params = load_checkpoint(&ckpt)?;
    let feats = load_feats(out, "train")?;
    let grid: Vec<usize> = cfg
        .mine
        .grid
        .iter()
        .copied()
        .filter(|&k| k >= 1 && k <= cfg.train.partitions)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if grid.is_empty() {
        return Err(Error::Config(format!(
            "mine.grid {:?} has no value in 1..={}",
            cfg.mine.grid, cfg.train.partitions
        )));
    }
    let batches = stats_batches(&params, &feats, cfg)?;
    let stats = miner_stats(&batches, cfg.train.partitions, &grid, cfg.train.alpha, cfg.mine.repeats)?;
    let p = out.join("miner_stats.json");
    std::fs::write(&p, serde_json::to_string_pretty(&stats)? + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(miner_table(&stats))
}

