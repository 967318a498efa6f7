//! Verification (EER) and identification (ACC) metrics.

use serde::{Deserialize, Serialize};

use super::trials::{Label, TrialSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    /// Percent.
    pub eer: f64,
    pub threshold: f64,
    /// Operating points in increasing threshold order; FAR falls, FRR rises.
    pub det: Vec<DetPoint>,
}

/// Equal error rate.
///
/// Operating points are taken at every distinct score and at `+inf`, with
/// `FAR(t) = P(nontarget >= t)` and `FRR(t) = P(target < t)`. The EER is
/// read off by linear interpolation between the last point with FAR > FRR
/// and the first with FAR <= FRR.
pub fn compute_eer(scores: &[f64], labels: &[Label]) -> Result<EerResult> {
    if scores.len() != labels.len() {
        return Err(Error::dim(
            "compute_eer",
            format!("{} scores, {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score"));
    }
    let mut pairs: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| (s, l == Label::Target))
        .collect();
    let n_tar = pairs.iter().filter(|p| p.1).count();
    let n_non = pairs.len() - n_tar;
    if n_tar == 0 {
        return Err(Error::SingleClass("nontarget"));
    }
    if n_non == 0 {
        return Err(Error::SingleClass("target"));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sweep upwards: targets strictly below t are rejected, nontargets at or
    // above t are accepted.
    let mut det = Vec::new();
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        det.push(DetPoint {
            threshold: t,
            far: (n_non - non_below) as f64 / n_non as f64,
            frr: tar_below as f64 / n_tar as f64,
        });
        while i < pairs.len() && pairs[i].0 == t {
            if pairs[i].1 {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    det.push(DetPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });

    let k = det
        .iter()
        .position(|p| p.far - p.frr <= 0.0)
        .expect("the +inf point has FAR <= FRR");
    let (eer, threshold) = if k == 0 {
        (det[0].far, det[0].threshold)
    } else {
        let (a, b) = (det[k - 1], det[k]);
        let (da, db) = (a.far - a.frr, b.far - b.frr);
        let lambda = da / (da - db);
        let threshold = if b.threshold.is_finite() {
            a.threshold + lambda * (b.threshold - a.threshold)
        } else {
            a.threshold
        };
        (a.far + lambda * (b.far - a.far), threshold)
    };
    Ok(EerResult {
        eer: 100.0 * eer,
        threshold,
        det,
    })
}

/// Percent of groups whose target strictly outscores every nontarget.
pub fn compute_acc(trials: &TrialSet, scores: &[f64]) -> Result<f64> {
    if scores.len() != trials.len() {
        return Err(Error::dim(
            "compute_acc",
            format!("{} scores for {} trials", scores.len(), trials.len()),
        ));
    }
    trials.validate()?;
    let mut offset = 0;
    let mut correct = 0usize;
    let mut groups = 0usize;
    for g in trials.groups() {
        let s = &scores[offset..offset + g.len()];
        offset += g.len();
        groups += 1;
        let target = g.iter().position(|t| t.label == Label::Target).expect("validated");
        let best_other = s
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if s[target] > best_other {
            correct += 1;
        }
    }
    if groups == 0 {
        return Err(Error::MalformedGroup {
            group: 0,
            msg: "no trial groups".into(),
        });
    }
    Ok(100.0 * correct as f64 / groups as f64)
}
