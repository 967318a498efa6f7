//! Identification-style trial groups: one anchor, one same-speaker
//! candidate, and `k` different-speaker candidates.
//!
//! File form, one trial per line:
//! ```text
//! {group}\t{anchor}\t{candidate}\t{target|nontarget}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Target,
    Nontarget,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Target => "target",
            Label::Nontarget => "nontarget",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "target" => Ok(Label::Target),
            "nontarget" => Ok(Label::Nontarget),
            other => Err(format!("label must be target or nontarget, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub group: usize,
    pub anchor: String,
    pub candidate: String,
    pub label: Label,
}

/// Trials stored group by group, target first within each group.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Contiguous runs of trials sharing a group id.
    pub fn groups(&self) -> impl Iterator<Item = &[Trial]> {
        self.trials.chunk_by(|a, b| a.group == b.group)
    }

    pub fn num_groups(&self) -> usize {
        self.groups().count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.trials.iter().map(|t| t.label).collect()
    }

    /// Exactly one target per group and distinct candidates within a group.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for g in self.groups() {
            let id = g[0].group;
            if !seen.insert(id) {
                return Err(Error::MalformedGroup {
                    group: id,
                    msg: "group is not contiguous".into(),
                });
            }
            let targets = g.iter().filter(|t| t.label == Label::Target).count();
            if targets != 1 {
                return Err(Error::MalformedGroup {
                    group: id,
                    msg: format!("{targets} targets"),
                });
            }
            if g.iter().any(|t| t.anchor != g[0].anchor) {
                return Err(Error::MalformedGroup {
                    group: id,
                    msg: "mixed anchors".into(),
                });
            }
            let cands: BTreeSet<_> = g.iter().map(|t| &t.candidate).collect();
            if cands.len() != g.len() {
                return Err(Error::MalformedGroup {
                    group: id,
                    msg: "repeated candidate".into(),
                });
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::with_capacity(self.trials.len() * 48);
        for t in &self.trials {
            s.push_str(&format!("{}\t{}\t{}\t{}\n", t.group, t.anchor, t.candidate, t.label));
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut trials = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(err(i + 1, format!("expected 4 fields, found {}", f.len())));
            }
            trials.push(Trial {
                group: f[0].parse().map_err(|_| err(i + 1, format!("bad group id {:?}", f[0])))?,
                anchor: f[1].into(),
                candidate: f[2].into(),
                label: f[3].parse().map_err(|m| err(i + 1, m))?,
            });
        }
        let set = Self { trials };
        set.validate()?;
        Ok(set)
    }
}

/// One group per anchor utterance, in input order. The positive is drawn
/// uniformly from the anchor speaker's other utterances, the negatives
/// uniformly without replacement from all other speakers' utterances.
/// `utts` is `(utt_id, speaker_id)`.
pub fn build_trials(utts: &[(String, String)], negatives: usize, seed: u64) -> Result<TrialSet> {
    let mut by_spk: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (u, s) in utts {
        by_spk.entry(s).or_default().push(u);
    }
    if by_spk.len() < 2 {
        return Err(Error::Dataset(format!("trials need at least 2 speakers, found {}", by_spk.len())));
    }
    if let Some((s, _)) = by_spk.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::Dataset(format!("speaker {s} has fewer than 2 utterances")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(utts.len() * (negatives + 1));
    for (g, (anchor, spk)) in utts.iter().enumerate() {
        let same: Vec<&str> = by_spk[spk.as_str()].iter().copied().filter(|u| u != anchor).collect();
        let others: Vec<&str> = utts
            .iter()
            .filter(|(_, s)| s != spk)
            .map(|(u, _)| u.as_str())
            .collect();
        if others.len() < negatives {
            return Err(Error::Dataset(format!(
                "anchor {anchor}: {negatives} negatives requested, only {} other-speaker utterances",
                others.len()
            )));
        }
        let positive = same[rng.gen_range(0..same.len())];
        trials.push(Trial {
            group: g,
            anchor: anchor.clone(),
            candidate: positive.into(),
            label: Label::Target,
        });
        for i in sample(&mut rng, others.len(), negatives) {
            trials.push(Trial {
                group: g,
                anchor: anchor.clone(),
                candidate: others[i].into(),
                label: Label::Nontarget,
            });
        }
    }
    Ok(TrialSet { trials })
}
