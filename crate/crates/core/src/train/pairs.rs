use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sub_seed;
use crate::error::{Error, Result};

/// Anchor and positive are indices into the caller's utterance list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApPair {
    pub anchor: usize,
    pub positive: usize,
    pub speaker: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<ApPair>,
    /// Speakers left out for having a single utterance.
    pub skipped: Vec<String>,
}

/// Same-speaker pairs for one epoch.
///
/// Each speaker's utterances are shuffled and paired off consecutively, so
/// every utterance appears once; with an odd count the last one is paired
/// with a random other utterance of the speaker. The pooled list is then
/// shuffled. `speakers[i]` is the speaker of utterance `i`.
pub fn make_pairs(speakers: &[&str], seed: u64, epoch: usize) -> Result<PairSet> {
    let mut by_spk: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in speakers.iter().enumerate() {
        by_spk.entry(s).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &[5, epoch as u64]));
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (spk, mut utts) in by_spk {
        if utts.len() < 2 {
            skipped.push(spk.to_string());
            continue;
        }
        utts.shuffle(&mut rng);
        for two in utts.chunks(2) {
            let (anchor, positive) = match *two {
                [a, p] => (a, p),
                [a] => {
                    let others: Vec<usize> = utts.iter().copied().filter(|&u| u != a).collect();
                    (a, others[rng.gen_range(0..others.len())])
                }
                _ => unreachable!("chunks(2)"),
            };
            pairs.push(ApPair {
                anchor,
                positive,
                speaker: spk.to_string(),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::Dataset(
            "no speaker has two or more utterances; cannot form anchor-positive pairs".into(),
        ));
    }
    if !skipped.is_empty() {
        log::warn!("make_pairs: skipped {} single-utterance speaker(s)", skipped.len());
    }
    pairs.shuffle(&mut rng);
    Ok(PairSet { pairs, skipped })
}
