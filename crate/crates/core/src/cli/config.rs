//! Run configuration: one TOML file with a section per stage, plus
//! `key=value` overrides addressed by dotted path (`train.alpha=0.2`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::frontend::{FbankConfig, VadConfig};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Speaker fractions for train, dev and eval.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fractions: [0.8, 0.0, 0.2],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Nontarget candidates per trial group.
    pub negatives: usize,
    /// Utterances averaged into each enrollment model.
    pub enroll: usize,
    pub trial_seed: u64,
    /// Upper edges, in days, of the time-span cohorts reported next to the
    /// full trial set. Empty for none.
    pub cohort_edges_days: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            negatives: 99,
            enroll: 1,
            trial_seed: 0,
            cohort_edges_days: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineConfig {
    /// Partition counts to scan.
    pub grid: Vec<usize>,
    /// Batches of training pairs to measure on.
    pub batches: usize,
    /// Timing repetitions per grid point.
    pub repeats: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            grid: vec![1, 4, 8, 16],
            batches: 4,
            repeats: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads, 0 for one per core.
    pub workers: usize,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub fbank: FbankConfig,
    pub vad: VadConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub mine: MineConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Applies `key=value` with a dotted key. The value is read as a TOML
    /// literal, or as a bare string if that fails.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Value::try_from(&*self).expect("run config serializes to TOML");
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config("empty override key".into()))?;
        let mut node = &mut root;
        for p in parts {
            node = node
                .get_mut(p)
                .filter(|v| v.is_table())
                .ok_or_else(|| Error::Config(format!("unknown config section {p:?} in {key:?}")))?;
        }
        let table = node.as_table_mut().expect("checked table");
        // Integers are accepted for float fields.
        let value = match (table.get(leaf), value) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(leaf.to_string(), value);
        *self = root
            .try_into()
            .map_err(|e| Error::Config(format!("override {key}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let sum: f64 = self.split.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split.fractions.iter().any(|f| *f < 0.0) {
            return Err(Error::Config(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.split.fractions
            )));
        }
        if self.eval.enroll == 0 {
            return Err(Error::Config("eval.enroll must be at least 1".into()));
        }
        Ok(())
    }
}
