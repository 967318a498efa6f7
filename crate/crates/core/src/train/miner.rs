//! Negative mining over a partitioned batch.
//!
//! A batch of `N` anchor-positive pairs is laid out as `2N` embedding rows,
//! row `2i` the anchor and row `2i + 1` the positive of pair `i`. Pairs are
//! split into `M` equal partitions in order. An anchor in partition `p`
//! looks for negatives among every row of partitions `p, p+1, ..` (mod `M`),
//! `scan_k` of them, skipping rows of its own speaker.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::MinerMode;
use super::sub_seed;
use crate::error::{Error, Result};
use crate::nn::loss::{dot, triplet_loss, triplet_loss_grad, UNIT_NORM_TOL};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub pairs: usize,
    pub partitions: usize,
    pub seed: u64,
    pub epoch: usize,
    pub batch: usize,
}

impl BatchPlan {
    pub fn new(pairs: usize, partitions: usize, seed: u64, epoch: usize, batch: usize) -> Result<Self> {
        if partitions == 0 || pairs == 0 || pairs % partitions != 0 {
            return Err(Error::Config(format!(
                "{pairs} pairs cannot be split into {partitions} equal partitions"
            )));
        }
        Ok(Self {
            pairs,
            partitions,
            seed,
            epoch,
            batch,
        })
    }

    pub fn pairs_per_partition(&self) -> usize {
        self.pairs / self.partitions
    }

    pub fn partition_of(&self, pair: usize) -> usize {
        pair / self.pairs_per_partition()
    }

    /// Embedding rows of the partitions scanned by an anchor of `pair`, in
    /// increasing row order.
    pub fn scan_rows(&self, pair: usize, scan_k: usize) -> Vec<usize> {
        let per = self.pairs_per_partition();
        let p = self.partition_of(pair);
        let mut parts: Vec<usize> = (0..scan_k).map(|j| (p + j) % self.partitions).collect();
        parts.sort_unstable();
        parts.dedup();
        parts
            .into_iter()
            .flat_map(|q| 2 * q * per..2 * (q + 1) * per)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    /// Pair index; the anchor is row `2 * pair`, the positive row `2 * pair + 1`.
    pub pair: usize,
    /// Row of the selected negative.
    pub negative: usize,
    pub s_ap: f64,
    pub s_an: f64,
    /// `s_an > s_ap - alpha`.
    pub violating: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletBatch {
    pub triplets: Vec<Triplet>,
    /// Fraction of anchors with at least one violating candidate in range.
    pub prob_hard: f64,
}

impl TripletBatch {
    pub fn mean_sap(&self) -> f64 {
        self.triplets.iter().map(|t| t.s_ap).sum::<f64>() / self.triplets.len() as f64
    }

    pub fn mean_san(&self) -> f64 {
        self.triplets.iter().map(|t| t.s_an).sum::<f64>() / self.triplets.len() as f64
    }
}

fn rows<T: Real>(emb: &Tensor<T>, expected: usize) -> Result<(usize, Vec<&[T]>)> {
    let [n, d] = emb.dims2("mine_negatives")?;
    if n != expected {
        return Err(Error::dim("mine_negatives", format!("{n} rows for {} expected", expected)));
    }
    let rows: Vec<&[T]> = emb.data().chunks(d).collect();
    if let Some(i) = rows
        .iter()
        .position(|r| (dot(r, r).sqrt() - 1.0).abs() > UNIT_NORM_TOL)
    {
        return Err(Error::Contract(format!("embedding row {i} is not unit-norm")));
    }
    Ok((d, rows))
}

/// Picks one negative per anchor. `pair_speakers[i]` is the speaker of pair `i`.
///
/// * hard: the candidate with the largest `s_an` (a violator whenever one exists);
/// * semi-hard: the largest `s_an` with `s_ap > s_an > s_ap - alpha`, falling
///   back to the hard choice when the window is empty;
/// * random: uniform over candidates, seeded per anchor from the plan.
///
/// Ties go to the lowest row.
pub fn mine_negatives<T: Real>(
    emb: &Tensor<T>,
    pair_speakers: &[&str],
    plan: &BatchPlan,
    mode: MinerMode,
    scan_k: usize,
    alpha: f64,
) -> Result<TripletBatch> {
    if pair_speakers.len() != plan.pairs {
        return Err(Error::dim(
            "mine_negatives",
            format!("{} speakers for {} pairs", pair_speakers.len(), plan.pairs),
        ));
    }
    if scan_k == 0 || scan_k > plan.partitions {
        return Err(Error::Config(format!("scan_k {scan_k} outside 1..={}", plan.partitions)));
    }
    let (_, rows) = rows(emb, 2 * plan.pairs)?;
    let mut triplets = Vec::with_capacity(plan.pairs);
    let mut hard_anchors = 0usize;
    for i in 0..plan.pairs {
        let anchor = rows[2 * i];
        let s_ap = dot(anchor, rows[2 * i + 1]);
        let cands: Vec<(usize, f64)> = plan
            .scan_rows(i, scan_k)
            .into_iter()
            .filter(|&r| pair_speakers[r / 2] != pair_speakers[i])
            .map(|r| (r, dot(anchor, rows[r])))
            .collect();
        if cands.is_empty() {
            return Err(Error::MinerStarvation { anchor: i, scan_k });
        }
        let hardest = cands
            .iter()
            .copied()
            .fold(None::<(usize, f64)>, |best, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            })
            .expect("non-empty");
        if hardest.1 > s_ap - alpha {
            hard_anchors += 1;
        }
        let (negative, s_an) = match mode {
            MinerMode::Hard => hardest,
            MinerMode::SemiHard => cands
                .iter()
                .copied()
                .filter(|&(_, s)| s < s_ap && s > s_ap - alpha)
                .fold(None::<(usize, f64)>, |best, c| match best {
                    Some(b) if b.1 >= c.1 => Some(b),
                    _ => Some(c),
                })
                .unwrap_or(hardest),
            MinerMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(
                    plan.seed,
                    &[4, plan.epoch as u64, plan.batch as u64, i as u64],
                ));
                cands[rng.gen_range(0..cands.len())]
            }
        };
        triplets.push(Triplet {
            pair: i,
            negative,
            s_ap,
            s_an,
            violating: s_an > s_ap - alpha,
        });
    }
    Ok(TripletBatch {
        triplets,
        prob_hard: hard_anchors as f64 / plan.pairs as f64,
    })
}

/// Mean triplet loss over the batch and its gradient on the embedding rows.
pub fn triplet_batch_loss<T: Real>(emb: &Tensor<T>, batch: &TripletBatch, alpha: f64) -> Result<(f64, Tensor<T>)> {
    let [_, d] = emb.dims2("triplet loss")?;
    let n = batch.triplets.len() as f64;
    let mut grad = vec![0.0f64; emb.len()];
    let mut loss = 0.0;
    let row = |r: usize| &emb.data()[r * d..(r + 1) * d];
    for t in &batch.triplets {
        loss += triplet_loss(t.s_ap, t.s_an, alpha);
        let (g_ap, g_an) = triplet_loss_grad(t.s_ap, t.s_an, alpha);
        if g_ap == 0.0 && g_an == 0.0 {
            continue;
        }
        let (a, p, ng) = (2 * t.pair, 2 * t.pair + 1, t.negative);
        for j in 0..d {
            let (ea, ep, en) = (row(a)[j].as_f64(), row(p)[j].as_f64(), row(ng)[j].as_f64());
            grad[a * d + j] += (g_ap * ep + g_an * en) / n;
            grad[p * d + j] += g_ap * ea / n;
            grad[ng * d + j] += g_an * ea / n;
        }
    }
    let grad = Tensor::from_vec(emb.shape(), grad.into_iter().map(T::of).collect())?;
    Ok((loss / n, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinerStats {
    pub partitions_scanned: usize,
    pub prob_hard: f64,
    /// Wall time of mining relative to scanning one partition.
    pub relative_time_cost: f64,
}

/// Probability of finding a hard negative, and relative mining cost, for
/// each `scan_k` in `grid`. `batches` are embedding tensors with their pair
/// speakers; each is mined `repeats` times per grid point for timing.
pub fn miner_stats(
    batches: &[(Tensor<f32>, Vec<String>)],
    partitions: usize,
    grid: &[usize],
    alpha: f64,
    repeats: usize,
) -> Result<Vec<MinerStats>> {
    let mut out = Vec::with_capacity(grid.len());
    for &k in grid {
        let mut hard = 0.0;
        let mut anchors = 0usize;
        let start = Instant::now();
        for _ in 0..repeats.max(1) {
            hard = 0.0;
            anchors = 0;
            for (b, (emb, spk)) in batches.iter().enumerate() {
                let spk: Vec<&str> = spk.iter().map(String::as_str).collect();
                let plan = BatchPlan::new(spk.len(), partitions, 0, 0, b)?;
                let tb = mine_negatives(emb, &spk, &plan, MinerMode::Hard, k, alpha)?;
                hard += tb.prob_hard * spk.len() as f64;
                anchors += spk.len();
            }
        }
        out.push(MinerStats {
            partitions_scanned: k,
            prob_hard: hard / anchors.max(1) as f64,
            relative_time_cost: start.elapsed().as_secs_f64(),
        });
    }
    let base = grid
        .iter()
        .position(|&k| k == 1)
        .map_or(out.first().map_or(1.0, |s| s.relative_time_cost), |i| out[i].relative_time_cost)
        .max(f64::MIN_POSITIVE);
    for s in &mut out {
        s.relative_time_cost /= base;
    }
    Ok(out)
}

/// Table of miner statistics, one row per scan width.
pub fn miner_table(stats: &[MinerStats]) -> String {
    let mut s = String::from("partitions scanned | P(hard) [%] | relative time\n");
    s.push_str("-------------------|-------------|--------------\n");
    for m in stats {
        s.push_str(&format!(
            "{:>18} | {:>11.2} | {:>12.2}\n",
            m.partitions_scanned,
            100.0 * m.prob_hard,
            m.relative_time_cost
        ));
    }
    s
}
