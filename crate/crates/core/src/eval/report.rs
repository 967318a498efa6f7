use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_acc, compute_eer, DetPoint};
use super::trials::TrialSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    /// Percent.
    pub eer: f64,
    /// Percent.
    pub acc: f64,
    pub threshold: f64,
    pub n_trials: usize,
    pub n_groups: usize,
    pub cohort: String,
    pub det: Vec<DetPoint>,
}

impl EvalReport {
    pub fn from_scores(system: &str, cohort: &str, trials: &TrialSet, scores: &[f64]) -> Result<Self> {
        let eer = compute_eer(scores, &trials.labels())?;
        Ok(Self {
            system: system.into(),
            eer: eer.eer,
            acc: compute_acc(trials, scores)?,
            threshold: eer.threshold,
            n_trials: trials.len(),
            n_groups: trials.num_groups(),
            cohort: cohort.into(),
            det: eer.det,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        std::fs::write(path, v).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let v = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&v)?)
    }

    /// `threshold,far,frr`, one operating point per line.
    pub fn write_det_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("threshold,far,frr\n");
        for p in &self.det {
            writeln!(s, "{},{},{}", p.threshold, p.far, p.frr).expect("write to string");
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Results table with one row per system.
pub fn results_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.system.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<width$} | EER[%] | ACC[%]\n", "system");
    s.push_str(&format!("{}-|--------|-------\n", "-".repeat(width)));
    for r in reports {
        writeln!(s, "{:<width$} | {:>6.2} | {:>6.2}", r.system, r.eer, r.acc).expect("write to string");
    }
    s
}
