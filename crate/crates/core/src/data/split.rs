use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Manifest;
use crate::error::{Error, Result};

/// Speaker-disjoint train/dev/eval split.
///
/// Speaker counts follow the largest-remainder rule, so they always add up to
/// the number of speakers. Any split with a positive fraction gets at least
/// one speaker or the call fails.
pub fn split_speakers(manifest: &Manifest, fractions: [f64; 3], seed: u64) -> Result<[Manifest; 3]> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let mut speakers = manifest.speakers();
    let n = speakers.len();
    speakers.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n - counts.iter().sum::<usize>()) {
        counts[i] += 1;
    }
    if let Some(i) = (0..3).find(|&i| fractions[i] > 0.0 && counts[i] == 0) {
        return Err(Error::Dataset(format!(
            "{n} speakers are too few for fractions {fractions:?} (split {i} would be empty)"
        )));
    }

    let mut rest = speakers.as_slice();
    let parts: Vec<Manifest> = counts
        .iter()
        .map(|&c| {
            let (take, tail) = rest.split_at(c);
            rest = tail;
            manifest.with_speakers(&take.iter().cloned().collect::<BTreeSet<_>>())
        })
        .collect();
    Ok(parts.try_into().expect("three parts"))
}
