//! Metadata cohorts over trial sets.

use std::collections::BTreeMap;

use super::trials::{Label, Trial, TrialSet};
use crate::data::Manifest;

/// Keeps trials satisfying `keep`. A group survives only if its target and
/// at least one nontarget survive.
pub fn cohort_filter(trials: &TrialSet, mut keep: impl FnMut(&Trial) -> bool) -> TrialSet {
    let mut out = Vec::new();
    for g in trials.groups() {
        let kept: Vec<&Trial> = g.iter().filter(|t| keep(t)).collect();
        let has_target = kept.iter().any(|t| t.label == Label::Target);
        let has_non = kept.iter().any(|t| t.label == Label::Nontarget);
        if has_target && has_non {
            out.extend(kept.into_iter().cloned());
        }
    }
    TrialSet { trials: out }
}

pub const DAY_S: i64 = 86_400;

/// Splits groups by the time between the anchor and its same-speaker
/// candidate: bucket `i` holds spans in `[edges[i-1], edges[i])` days
/// (`edges[-1]` = 0). Groups with a missing timestamp or a span past the
/// last edge belong to no bucket.
pub fn time_span_cohorts(trials: &TrialSet, manifest: &Manifest, edges_days: &[f64]) -> Vec<TrialSet> {
    let ts: BTreeMap<&str, Option<i64>> = manifest
        .records
        .iter()
        .map(|r| (r.utt_id.as_str(), r.timestamp))
        .collect();
    let span_days = |g: &[Trial]| -> Option<f64> {
        let target = g.iter().find(|t| t.label == Label::Target)?;
        let a = (*ts.get(target.anchor.as_str())?)?;
        let c = (*ts.get(target.candidate.as_str())?)?;
        Some((a - c).abs() as f64 / DAY_S as f64)
    };
    let bucket_of: BTreeMap<usize, usize> = trials
        .groups()
        .filter_map(|g| {
            let d = span_days(g)?;
            let b = edges_days.iter().position(|&e| d < e)?;
            Some((g[0].group, b))
        })
        .collect();
    (0..edges_days.len())
        .map(|b| cohort_filter(trials, |t| bucket_of.get(&t.group) == Some(&b)))
        .collect()
}
