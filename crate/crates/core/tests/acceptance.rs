//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! 1. exact parameter counts of the canonical models
//! 2. finite-difference gradient checks for every layer
//! 3. EER and ACC against brute-force oracles
//! 4. miner monotonicity in the scan width, with an exhaustive-scan oracle
//! 5. end-to-end toy training: EER, ACC and a random-embedding baseline
//! 6. pretraining does not hurt (median over seeds)
//! 7. five-utterance enrollment does not hurt (median over seeds)
//! 8. score fusion of ResCNN and GRU (median over seeds)
//! 9. byte-identical metrics for a repeated run

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{corpus, embed, eval_trials, median, score, toy_synth, toy_train, train, Corpus, Run};
use voxembed::eval::{compute_acc, compute_eer, fuse_scores, score_trials, Label, Trial, TrialSet};
use voxembed::model::arch::LayerPlan;
use voxembed::model::{batch_input, forward, ArchSpec, ModelParams, SpeakerEmbedding};
use voxembed::nn::gradcheck::{grad_check, random_tensor};
use voxembed::nn::{
    affine, affine_backward, l2_normalize_backward, l2_normalize_rows, softmax_xent, temporal_average,
    temporal_average_backward, BatchNorm, BnParams, Conv2d, GruParams, Mode, ResBlockParams,
};
use voxembed::train::{mine_negatives, pair_batches, triplet_batch_loss, write_metrics_csv, BatchPlan, MinerMode, TripletBatch};
use voxembed::Tensor;

type Outcome = Result<String, String>;

const SEEDS: [u64; 3] = [0, 1, 2];

// ---------------------------------------------------------------- 1

/// Value and last-digit unit of a printed figure like "2.4M". Printed counts
/// may be rounded or truncated, so a count within one unit matches.
fn rounded(figure: &str) -> (f64, f64) {
    let (num, scale) = match figure.chars().last() {
        Some('K') => (&figure[..figure.len() - 1], 1e3),
        Some('M') => (&figure[..figure.len() - 1], 1e6),
        _ => (figure, 1.0),
    };
    let value: f64 = num.parse().unwrap();
    let decimals = num.split('.').nth(1).map_or(0, str::len) as i32;
    let trailing_zeros = if decimals == 0 {
        num.chars().rev().take_while(|&c| c == '0').count() as i32
    } else {
        0
    };
    let unit = 10f64.powi(trailing_zeros - decimals) * scale;
    (value * scale, unit)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    // Closed forms: conv k*k*c_in*c_out without bias, BN 2 * channels * freq.
    let conv = |k: usize, ci: usize, co: usize, freq: usize| k * k * ci * co + 2 * co * freq;
    let gru = |d: usize, h: usize| 3 * ((d + h) * h + h);
    let res = ArchSpec::rescnn();
    let g = ArchSpec::gru();
    let res_plan = res.layer_plan();
    let gru_plan = g.layer_plan();
    let count = |plan: &[LayerPlan], name: &str| plan.iter().find(|l| l.name == name).map(LayerPlan::count);
    let rows: Vec<(&str, Option<usize>, usize, &str)> = vec![
        ("conv64-s", count(&res_plan, "conv64-s"), conv(5, 1, 64, 32), "6K"),
        ("res64 conv", count(&res_plan, "res64/1").map(|c| c / 2), conv(3, 64, 64, 32), "41K"),
        ("res128 conv", count(&res_plan, "res128/1").map(|c| c / 2), conv(3, 128, 128, 16), "151K"),
        ("conv128-s", count(&res_plan, "conv128-s"), conv(5, 64, 128, 16), "209K"),
        ("res256 conv", count(&res_plan, "res256/1").map(|c| c / 2), conv(3, 256, 256, 8), "594K"),
        ("conv256-s", count(&res_plan, "conv256-s"), conv(5, 128, 256, 8), "823K"),
        ("res512 conv", count(&res_plan, "res512/1").map(|c| c / 2), conv(3, 512, 512, 4), "2.4M"),
        ("conv512-s", count(&res_plan, "conv512-s"), conv(5, 256, 512, 4), "3.3M"),
        ("ResCNN affine", count(&res_plan, "affine"), 2048 * 512 + 512, "1M"),
        ("gru1", count(&gru_plan, "gru1"), gru(2048, 1024), "9.4M"),
        ("gru2", count(&gru_plan, "gru2"), gru(1024, 1024), "6.3M"),
        ("gru3", count(&gru_plan, "gru3"), gru(1024, 1024), "6.3M"),
        ("GRU affine", count(&gru_plan, "affine"), 1024 * 512 + 512, "500K"),
        ("ResCNN total", Some(res.param_count()), 24_266_816, "24M"),
        ("GRU total", Some(g.param_count()), 22_559_808, "23M"),
    ];
    let mut bad = Vec::new();
    for (name, got, want, figure) in &rows {
        let (approx, tol) = rounded(figure);
        if *got != Some(*want) || (*want as f64 - approx).abs() >= tol {
            bad.push(format!("{name}: got {got:?}, closed form {want}, rounded figure {figure}"));
        }
    }
    let summed: usize = res_plan.iter().map(LayerPlan::count).sum();
    if summed != 24_266_816 {
        bad.push(format!("ResCNN layer plan sums to {summed}"));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(1) {
        bad.push(format!("took {elapsed:?}"));
    }
    if bad.is_empty() {
        Ok(format!("{} counts exact, ResCNN 24,266,816, GRU 22,559,808 ({elapsed:.2?})", rows.len()))
    } else {
        Err(bad.join("; "))
    }
}

// ---------------------------------------------------------------- 2

const EPS: f64 = 1e-6;

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error of `analytic` against central differences of
/// `loss` evaluated with `x` replaced by the probe.
fn fd(x: &Tensor<f64>, analytic: &Tensor<f64>, mut loss: impl FnMut(&Tensor<f64>) -> f64) -> f64 {
    let shape = x.shape().to_vec();
    grad_check(
        |v| loss(&Tensor::from_vec(&shape, v.to_vec()).unwrap()),
        x.data(),
        analytic.data(),
        EPS,
    )
}

fn bn_params<'a>(g: &'a Tensor<f64>, b: &'a Tensor<f64>, m: &'a Tensor<f64>, v: &'a Tensor<f64>) -> BnParams<'a, f64> {
    BnParams {
        gamma: g,
        beta: b,
        running_mean: m,
        running_var: v,
    }
}

fn grad_conv(rng: &mut ChaCha8Rng) -> f64 {
    let (b, ci, co) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
    let (h, w) = (rng.gen_range(3..8), rng.gen_range(3..8));
    let k = [1, 3, 5][rng.gen_range(0..3)].min(h).min(w);
    let conv = Conv2d::new((rng.gen_range(1..3), rng.gen_range(1..3)), (rng.gen_range(0..3), rng.gen_range(0..3)));
    let x = random_tensor(&[b, ci, h, w], rng);
    let kern = random_tensor(&[co, ci, k, k], rng);
    let y = conv.forward(&x, &kern).unwrap();
    let r = random_tensor(y.shape(), rng);
    let g = conv.backward(&x, &kern, &r).unwrap();
    let ex = fd(&x, &g.d_input, |x| dot(&conv.forward(x, &kern).unwrap(), &r));
    let ek = fd(&kern, g.param("W"), |k| dot(&conv.forward(&x, k).unwrap(), &r));
    ex.max(ek)
}

fn grad_resblock(rng: &mut ChaCha8Rng) -> f64 {
    let (b, c, h, w) = (rng.gen_range(2..4), rng.gen_range(1..3), rng.gen_range(3..6), rng.gen_range(2..5));
    let units = c * w;
    let bn = BatchNorm::default();
    let x = random_tensor(&[b, c, h, w], rng);
    let mut t: Vec<Tensor<f64>> = vec![
        random_tensor(&[c, c, 3, 3], rng),
        random_tensor(&[units], rng).map(|v| 1.0 + 0.3 * v),
        random_tensor(&[units], rng),
        random_tensor(&[c, c, 3, 3], rng),
        random_tensor(&[units], rng).map(|v| 1.0 + 0.3 * v),
        random_tensor(&[units], rng),
    ];
    let (zeros, ones) = (Tensor::zeros(&[units]), Tensor::full(&[units], 1.0));
    let run = |x: &Tensor<f64>, t: &[Tensor<f64>]| {
        let p = ResBlockParams {
            conv1: &t[0],
            bn1: bn_params(&t[1], &t[2], &zeros, &ones),
            conv2: &t[3],
            bn2: bn_params(&t[4], &t[5], &zeros, &ones),
        };
        voxembed::nn::resblock::forward(x, p, &bn, Mode::Train).unwrap()
    };
    let (y, cache) = run(&x, &t);
    let r = random_tensor(y.shape(), rng);
    let p = ResBlockParams {
        conv1: &t[0],
        bn1: bn_params(&t[1], &t[2], &zeros, &ones),
        conv2: &t[3],
        bn2: bn_params(&t[4], &t[5], &zeros, &ones),
    };
    let g = voxembed::nn::resblock::backward(&cache, p, &bn, &r).unwrap();
    let mut worst = fd(&x, &g.d_input, |x| dot(&run(x, &t).0, &r));
    for (i, key) in ["conv1/W", "bn1/gamma", "bn1/beta", "conv2/W", "bn2/gamma", "bn2/beta"].iter().enumerate() {
        let orig = t[i].clone();
        let analytic = g.param(key).clone();
        worst = worst.max(fd(&orig, &analytic, |v| {
            t[i] = v.clone();
            dot(&run(&x, &t).0, &r)
        }));
        t[i] = orig;
    }
    worst
}

fn grad_batchnorm(rng: &mut ChaCha8Rng) -> f64 {
    let dims = [rng.gen_range(2..4), rng.gen_range(1..4), rng.gen_range(2..7), rng.gen_range(1..5)];
    let units = dims[1] * dims[3];
    let bn = BatchNorm::default();
    let x = random_tensor(&dims, rng);
    let gamma = random_tensor(&[units], rng);
    let beta = random_tensor(&[units], rng);
    let (m, v) = (Tensor::zeros(&[units]), Tensor::full(&[units], 1.0));
    let (y, cache) = bn.forward(&x, bn_params(&gamma, &beta, &m, &v), Mode::Train).unwrap();
    let r = random_tensor(y.shape(), rng);
    let g = bn.backward(&cache, &gamma, &r).unwrap();
    let f = |x: &Tensor<f64>, ga: &Tensor<f64>, be: &Tensor<f64>| {
        dot(&bn.forward(x, bn_params(ga, be, &m, &v), Mode::Train).unwrap().0, &r)
    };
    fd(&x, &g.d_input, |x| f(x, &gamma, &beta))
        .max(fd(&gamma, g.param("gamma"), |ga| f(&x, ga, &beta)))
        .max(fd(&beta, g.param("beta"), |be| f(&x, &gamma, be)))
}

fn grad_gru(rng: &mut ChaCha8Rng) -> f64 {
    let (b, t, d, h) = (rng.gen_range(1..3), rng.gen_range(1..5), rng.gen_range(1..6), rng.gen_range(1..5));
    let x = random_tensor(&[b, t, d], rng);
    let mut p: Vec<Tensor<f64>> = (0..9)
        .map(|i| match i / 3 {
            0 => random_tensor(&[d, h], rng),
            1 => random_tensor(&[h, h], rng),
            _ => random_tensor(&[h], rng),
        })
        .collect();
    let run = |x: &Tensor<f64>, p: &[Tensor<f64>]| {
        let gp = GruParams {
            w: [&p[0], &p[1], &p[2]],
            u: [&p[3], &p[4], &p[5]],
            b: [&p[6], &p[7], &p[8]],
        };
        voxembed::nn::gru::forward(x, gp, None).unwrap()
    };
    let (y, cache) = run(&x, &p);
    let r = random_tensor(y.shape(), rng);
    let gp = GruParams {
        w: [&p[0], &p[1], &p[2]],
        u: [&p[3], &p[4], &p[5]],
        b: [&p[6], &p[7], &p[8]],
    };
    let g = voxembed::nn::gru::backward(&cache, gp, &r).unwrap();
    let mut worst = fd(&x, &g.d_input, |x| dot(&run(x, &p).0, &r));
    let keys = ["W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h"];
    for (i, key) in keys.iter().enumerate() {
        let orig = p[i].clone();
        let analytic = g.param(key).clone();
        worst = worst.max(fd(&orig, &analytic, |v| {
            p[i] = v.clone();
            dot(&run(&x, &p).0, &r)
        }));
        p[i] = orig;
    }
    worst
}

fn grad_affine(rng: &mut ChaCha8Rng) -> f64 {
    let (n, di, d_o) = (rng.gen_range(1..5), rng.gen_range(1..12), rng.gen_range(1..12));
    let x = random_tensor(&[n, di], rng);
    let w = random_tensor(&[di, d_o], rng);
    let b = random_tensor(&[d_o], rng);
    let r = random_tensor(&[n, d_o], rng);
    let g = affine_backward(&x, &w, &r).unwrap();
    fd(&x, &g.d_input, |x| dot(&affine(x, &w, &b).unwrap(), &r))
        .max(fd(&w, g.param("W"), |w| dot(&affine(&x, w, &b).unwrap(), &r)))
        .max(fd(&b, g.param("b"), |b| dot(&affine(&x, &w, b).unwrap(), &r)))
}

fn grad_temporal_average(rng: &mut ChaCha8Rng) -> f64 {
    let (b, t, d) = (rng.gen_range(1..4), rng.gen_range(1..9), rng.gen_range(1..8));
    let x = random_tensor(&[b, t, d], rng);
    let r = random_tensor(&[b, d], rng);
    let g = temporal_average_backward(t, &r).unwrap();
    fd(&x, &g, |x| dot(&temporal_average(x).unwrap(), &r))
}

fn grad_l2_normalize(rng: &mut ChaCha8Rng) -> f64 {
    let (n, d) = (rng.gen_range(1..4), rng.gen_range(2..16));
    let x = random_tensor(&[n, d], rng);
    let r = random_tensor(&[n, d], rng);
    let (y, norms) = l2_normalize_rows(&x).unwrap();
    let g = l2_normalize_backward(&y, &norms, &r).unwrap();
    fd(&x, &g, |x| dot(&l2_normalize_rows(x).unwrap().0, &r))
}

fn grad_softmax_xent(rng: &mut ChaCha8Rng) -> f64 {
    let k = rng.gen_range(2..12);
    let label = rng.gen_range(0..k);
    let x = random_tensor(&[k], rng);
    let (_, g) = softmax_xent(x.data(), label).unwrap();
    let g = Tensor::from_vec(&[k], g).unwrap();
    fd(&x, &g, |x| softmax_xent(x.data(), label).unwrap().0)
}

/// Same triplets, scores recomputed from `y`.
fn rescore(batch: &TripletBatch, y: &Tensor<f64>) -> TripletBatch {
    let d = y.shape()[1];
    let row = |i: usize| &y.data()[i * d..(i + 1) * d];
    let s = |a: usize, b: usize| row(a).iter().zip(row(b)).map(|(x, z)| x * z).sum::<f64>();
    let mut out = batch.clone();
    for t in &mut out.triplets {
        t.s_ap = s(2 * t.pair, 2 * t.pair + 1);
        t.s_an = s(2 * t.pair, t.negative);
    }
    out
}

/// Raw embeddings through length normalization, hard mining and the triplet loss.
fn grad_triplet_path(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.gen_range(1..4);
    let n = m * rng.gen_range(2..4);
    let d = rng.gen_range(3..10);
    let speakers: Vec<String> = (0..n).map(|i| format!("s{}", i % (n / 2 + 1))).collect();
    let spk: Vec<&str> = speakers.iter().map(String::as_str).collect();
    let plan = BatchPlan::new(n, m, 0, 0, 0).unwrap();
    let x = random_tensor(&[2 * n, d], rng);
    let (y, norms) = l2_normalize_rows(&x).unwrap();
    let mined = mine_negatives(&y, &spk, &plan, MinerMode::Hard, m, 0.5).unwrap();
    let (_, dy) = triplet_batch_loss(&y, &mined, 0.5).unwrap();
    let dx = l2_normalize_backward(&y, &norms, &dy).unwrap();
    fd(&x, &dx, |x| {
        let y = l2_normalize_rows(x).unwrap().0;
        triplet_batch_loss(&y, &rescore(&mined, &y), 0.5).unwrap().0
    })
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    type Check = fn(&mut ChaCha8Rng) -> f64;
    let layers: [(&str, Check); 9] = [
        ("conv2d", grad_conv),
        ("resblock", grad_resblock),
        ("batchnorm_seq", grad_batchnorm),
        ("gru_layer", grad_gru),
        ("affine", grad_affine),
        ("temporal_average", grad_temporal_average),
        ("l2_normalize", grad_l2_normalize),
        ("softmax_xent", grad_softmax_xent),
        ("triplet path", grad_triplet_path),
    ];
    let mut report = Vec::new();
    let mut bad = Vec::new();
    for (i, (name, check)) in layers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let worst = (0..10).map(|_| check(&mut rng)).fold(0.0, f64::max);
        report.push(format!("{name} {worst:.1e}"));
        if !(worst < 1e-4) {
            bad.push(format!("{name} max rel. err. {worst:.2e}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(120) {
        bad.push(format!("took {elapsed:?}"));
    }
    if bad.is_empty() {
        Ok(format!("10 shapes per layer, worst: {} ({elapsed:.1?})", report.join(", ")))
    } else {
        Err(bad.join("; "))
    }
}

// ---------------------------------------------------------------- 3

/// Every distinct score and +inf as a threshold, rates by direct counting,
/// interpolated at the first point where FAR <= FRR.
fn eer_oracle(tar: &[f64], non: &[f64]) -> f64 {
    let mut ts: Vec<f64> = tar.iter().chain(non).copied().collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.push(f64::INFINITY);
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let far = non.iter().filter(|&&s| s >= t).count() as f64 / non.len() as f64;
            let frr = tar.iter().filter(|&&s| s < t).count() as f64 / tar.len() as f64;
            (far, frr)
        })
        .collect();
    let k = pts.iter().position(|(far, frr)| far <= frr).unwrap();
    if k == 0 {
        return 100.0 * pts[0].0;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    let (da, db) = (a.0 - a.1, b.0 - b.1);
    100.0 * (a.0 + da / (da - db) * (b.0 - a.0))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = rng.gen_range(2..=20);
        let n_tar = rng.gen_range(1..n);
        let tied = i % 2 == 0;
        let mut draw = || if tied { rng.gen_range(0..6) as f64 / 5.0 } else { rng.gen::<f64>() };
        let scores: Vec<f64> = (0..n).map(|_| draw()).collect();
        let labels: Vec<Label> = (0..n).map(|j| if j < n_tar { Label::Target } else { Label::Nontarget }).collect();
        let got = compute_eer(&scores, &labels).map_err(|e| e.to_string())?.eer;
        let want = eer_oracle(&scores[..n_tar], &scores[n_tar..]);
        worst = worst.max((got - want).abs());
    }
    if worst > 1e-9 {
        return Err(format!("EER differs from the sweep oracle by up to {worst:e}"));
    }
    let mut trials = Vec::new();
    let mut scores = Vec::new();
    let mut correct = 0;
    for g in 0..300 {
        let size = rng.gen_range(2..8);
        let target = rng.gen_range(0..size);
        let s: Vec<f64> = (0..size).map(|_| rng.gen_range(0..4) as f64).collect();
        let best_other = (0..size).filter(|&j| j != target).map(|j| s[j]).fold(f64::NEG_INFINITY, f64::max);
        correct += usize::from(s[target] > best_other);
        for (j, v) in s.into_iter().enumerate() {
            trials.push(Trial {
                group: g,
                anchor: format!("a{g}"),
                candidate: format!("c{g}_{j}"),
                label: if j == target { Label::Target } else { Label::Nontarget },
            });
            scores.push(v);
        }
    }
    let acc = compute_acc(&TrialSet { trials }, &scores).map_err(|e| e.to_string())?;
    let want = 100.0 * correct as f64 / 300.0;
    if acc != want {
        return Err(format!("ACC {acc} vs direct count {want}"));
    }
    Ok(format!("1000 score sets, max |EER - oracle| = {worst:.1e}; ACC {acc:.2}% on 300 groups equals direct count"))
}

// ---------------------------------------------------------------- 4

/// Fraction of anchors with a margin violator among the rows of partitions
/// `p, p+1, .., p+k-1 (mod m)`, by explicit enumeration.
fn prob_hard_oracle(emb: &Tensor<f32>, spk: &[String], m: usize, k: usize, alpha: f64) -> f64 {
    let d = emb.shape()[1];
    let n = spk.len();
    let per = n / m;
    let row = |i: usize| &emb.data()[i * d..(i + 1) * d];
    let s = |a: usize, b: usize| row(a).iter().zip(row(b)).map(|(x, y)| *x as f64 * *y as f64).sum::<f64>();
    let mut hard = 0;
    for i in 0..n {
        let p = i / per;
        let s_ap = s(2 * i, 2 * i + 1);
        let mut found = false;
        for j in 0..k {
            let q = (p + j) % m;
            for r in 2 * q * per..2 * (q + 1) * per {
                if spk[r / 2] != spk[i] && s(2 * i, r) > s_ap - alpha {
                    found = true;
                }
            }
        }
        hard += usize::from(found);
    }
    hard as f64 / n as f64
}

fn criterion_4(trained: &ModelParams<f32>, corpus: &Corpus) -> Outcome {
    let mut cfg = toy_train("toy-rescnn", 0);
    cfg.batch_pairs = 64;
    cfg.partitions = 8;
    let untrained = ModelParams::<f32>::build(ArchSpec::toy_rescnn(), 0).unwrap();
    let mut curves = Vec::new();
    for (label, model) in [("trained", trained), ("untrained", &untrained)] {
        for batch in pair_batches(&corpus.train, &cfg, 0).map_err(|e| e.to_string())? {
            let x = batch_input::<f32>(&batch.chunks.iter().collect::<Vec<_>>()).unwrap();
            let emb = forward(model, &x, Mode::Infer).unwrap().embeddings;
            if emb.shape()[0] > 256 {
                return Err(format!("batch of {} embeddings", emb.shape()[0]));
            }
            let spk: Vec<&str> = batch.speakers.iter().map(String::as_str).collect();
            let plan = BatchPlan::new(spk.len(), cfg.partitions, 0, 0, 0).unwrap();
            let mut curve = Vec::new();
            for k in 1..=cfg.partitions {
                let tb = mine_negatives(&emb, &spk, &plan, MinerMode::Hard, k, cfg.alpha).map_err(|e| e.to_string())?;
                let oracle = prob_hard_oracle(&emb, &batch.speakers, cfg.partitions, k, cfg.alpha);
                if (tb.prob_hard - oracle).abs() > 1e-12 {
                    return Err(format!("{label}: scan_k {k} prob_hard {} vs oracle {oracle}", tb.prob_hard));
                }
                curve.push(tb.prob_hard);
            }
            if curve.windows(2).any(|w| w[1] < w[0]) {
                return Err(format!("{label}: prob_hard not monotone: {curve:?}"));
            }
            curves.push((label, curve));
        }
    }
    let mean = |label: &str, k: usize| {
        let v: Vec<f64> = curves.iter().filter(|c| c.0 == label).map(|c| c.1[k]).collect();
        100.0 * v.iter().sum::<f64>() / v.len() as f64
    };
    Ok(format!(
        "{} batches of 128 embeddings, 8 partitions, oracle exact; mean P(hard) k=1..8 trained {:.1}% -> {:.1}%, untrained {:.1}% -> {:.1}%",
        curves.len(),
        mean("trained", 0),
        mean("trained", 7),
        mean("untrained", 0),
        mean("untrained", 7)
    ))
}

// ---------------------------------------------------------------- 5..9

struct Runs {
    corpus: Corpus,
    trials: TrialSet,
    pretrained: BTreeMap<u64, Run>,
    triplet_only: BTreeMap<u64, f64>,
    gru: BTreeMap<u64, Run>,
    elapsed_first: Duration,
}

fn random_baseline(trials: &TrialSet, eval: &[voxembed::frontend::FeatureMatrix], draws: u64) -> (f64, f64) {
    let (mut eer, mut acc) = (0.0, 0.0);
    for seed in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let embs: Vec<SpeakerEmbedding> = eval
            .iter()
            .map(|f| {
                let v: Vec<f32> = (0..64).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
                SpeakerEmbedding::normalized(f.utt_id.clone(), Some(f.speaker_id.clone()), &v).unwrap()
            })
            .collect();
        let (e, a) = score(trials, &embs, 1);
        eer += e;
        acc += a;
    }
    (eer / draws as f64, acc / draws as f64)
}

fn criterion_5(runs: &Runs) -> Outcome {
    let run = &runs.pretrained[&0];
    let (eer, acc) = score(&runs.trials, &embed(&run.params, &runs.corpus.eval), 1);
    let (r_eer, r_acc) = random_baseline(&runs.trials, &runs.corpus.eval, 20);
    let base = 100.0 / 100.0;
    let detail = format!(
        "toy-rescnn EER {eer:.2}% ACC {acc:.2}% on {} groups of 100; random EER {r_eer:.2}% ACC {r_acc:.2}% (base rate {base:.0}%); {:.0?}",
        runs.trials.num_groups(),
        runs.elapsed_first
    );
    let ok = eer < 10.0
        && acc > 80.0
        && (r_eer - 50.0).abs() <= 3.0
        && (r_acc - base).abs() <= 1.0
        && runs.elapsed_first < Duration::from_secs(30 * 60);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6(runs: &Runs) -> Outcome {
    let pre: Vec<f64> = SEEDS
        .iter()
        .map(|s| score(&runs.trials, &embed(&runs.pretrained[s].params, &runs.corpus.eval), 1).0)
        .collect();
    let only: Vec<f64> = SEEDS.iter().map(|s| runs.triplet_only[s]).collect();
    let (mp, mo) = (median(pre.clone()), median(only.clone()));
    let detail = format!("median EER softmax+triplet {mp:.2}% {pre:.2?} vs triplet-only {mo:.2}% {only:.2?}");
    if mp <= mo {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7(runs: &Runs) -> Outcome {
    let (mut one, mut five) = (Vec::new(), Vec::new());
    for s in SEEDS {
        let embs = embed(&runs.pretrained[&s].params, &runs.corpus.eval);
        one.push(score(&runs.trials, &embs, 1).0);
        five.push(score(&runs.trials, &embs, 5).0);
    }
    let (m1, m5) = (median(one.clone()), median(five.clone()));
    let detail = format!("median EER 5-utt enrollment {m5:.2}% {five:.2?} vs 1-utt {m1:.2}% {one:.2?}");
    if m5 <= m1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8(runs: &Runs) -> Outcome {
    let (mut res, mut gru, mut fused) = (Vec::new(), Vec::new(), Vec::new());
    for s in SEEDS {
        let a = score_trials(&runs.trials, &embed(&runs.pretrained[&s].params, &runs.corpus.eval)).unwrap();
        let b = score_trials(&runs.trials, &embed(&runs.gru[&s].params, &runs.corpus.eval)).unwrap();
        let labels = runs.trials.labels();
        res.push(compute_eer(&a, &labels).unwrap().eer);
        gru.push(compute_eer(&b, &labels).unwrap().eer);
        fused.push(compute_eer(&fuse_scores(&a, &b).unwrap(), &labels).unwrap().eer);
    }
    let (mr, mg, mf) = (median(res.clone()), median(gru.clone()), median(fused.clone()));
    let detail = format!("median EER fused {mf:.2}% {fused:.2?}, ResCNN {mr:.2}% {res:.2?}, GRU {mg:.2}% {gru:.2?}");
    if mf <= mr.min(mg) + 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metrics_bytes(run: &Run, dir: &std::path::Path, name: &str) -> Vec<u8> {
    let path = dir.join(name);
    write_metrics_csv(&path, &run.finetune.epochs).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    for l in &run.pretrain.as_ref().unwrap().epoch_loss {
        bytes.extend(format!("{l:.6}\n").bytes());
    }
    bytes
}

fn criterion_9(runs: &Runs) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let again = corpus(&toy_synth(), 40);
    let rerun = train(&again.train, &toy_train("toy-gru", 0), true);
    let a = metrics_bytes(&runs.gru[&0], dir.path(), "first.csv");
    let b = metrics_bytes(&rerun, dir.path(), "second.csv");
    let same_params = rerun.params.tensors() == runs.gru[&0].params.tensors();
    if a == b && same_params {
        Ok(format!("toy-gru seed 0 regenerated and retrained: {} metric bytes identical, parameters identical", a.len()))
    } else {
        Err(format!("metrics identical: {}, parameters identical: {same_params}", a == b))
    }
}

fn train_all() -> Runs {
    let corpus = corpus(&toy_synth(), 40);
    let trials = eval_trials(&corpus.eval, 99);
    let start = Instant::now();
    let first = train(&corpus.train, &toy_train("toy-rescnn", 0), true);
    let elapsed_first = start.elapsed();
    let mut pretrained = BTreeMap::from([(0, first)]);
    let mut triplet_only = BTreeMap::new();
    let mut gru = BTreeMap::new();
    for s in SEEDS {
        if s != 0 {
            pretrained.insert(s, train(&corpus.train, &toy_train("toy-rescnn", s), true));
        }
        let only = train(&corpus.train, &toy_train("toy-rescnn", s), false);
        triplet_only.insert(s, score(&trials, &embed(&only.params, &corpus.eval), 1).0);
        gru.insert(s, train(&corpus.train, &toy_train("toy-gru", s), true));
    }
    Runs {
        corpus,
        trials,
        pretrained,
        triplet_only,
        gru,
        elapsed_first,
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id} {tag} {name}: {detail}");
    };
    report(1, "parameter counts", criterion_1());
    report(2, "gradient suite", criterion_2());
    report(3, "EER/ACC oracles", criterion_3());
    let runs = train_all();
    report(4, "miner monotonicity", criterion_4(&runs.pretrained[&0].params, &runs.corpus));
    report(5, "end-to-end toy training", criterion_5(&runs));
    report(6, "pretraining benefit", criterion_6(&runs));
    report(7, "enrollment trend", criterion_7(&runs));
    report(8, "fusion sanity", criterion_8(&runs));
    report(9, "determinism", criterion_9(&runs));
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
