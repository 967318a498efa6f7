//! Verification metrics, enrollment, fusion and cohorts.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use voxembed::data::{Manifest, UttRecord};
use voxembed::eval::cohort::DAY_S;
use voxembed::eval::{
    build_trials, compute_acc, compute_eer, enroll, fuse_scores, score_trials, time_span_cohorts, Label, TrialSet,
};
use voxembed::model::SpeakerEmbedding;

/// Threshold sweep over every distinct score plus +inf, interpolated where
/// FAR first drops to FRR.
fn eer_oracle(scores: &[f64], labels: &[Label]) -> f64 {
    let tar: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == Label::Target).map(|(s, _)| *s).collect();
    let non: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == Label::Nontarget).map(|(s, _)| *s).collect();
    let mut ts = scores.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.push(f64::INFINITY);
    let rate = |v: &[f64], f: &dyn Fn(f64) -> bool| v.iter().filter(|&&s| f(s)).count() as f64 / v.len() as f64;
    let pts: Vec<(f64, f64)> = ts.iter().map(|&t| (rate(&non, &|s| s >= t), rate(&tar, &|s| s < t))).collect();
    let k = pts.iter().position(|(a, r)| a <= r).unwrap();
    if k == 0 {
        return 100.0 * pts[0].0;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    let (da, db) = (a.0 - a.1, b.0 - b.1);
    100.0 * (a.0 + da / (da - db) * (b.0 - a.0))
}

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    (2usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![(0i32..8).prop_map(|v| v as f64 / 7.0), -1.0f64..1.0], n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter_map("needs both classes", |(s, l)| {
                let labels: Vec<Label> = l.into_iter().map(|t| if t { Label::Target } else { Label::Nontarget }).collect();
                let both = labels.contains(&Label::Target) && labels.contains(&Label::Nontarget);
                both.then_some((s, labels))
            })
    })
}

proptest! {
    #[test]
    fn eer_matches_threshold_sweep((scores, labels) in scored()) {
        let got = compute_eer(&scores, &labels).unwrap().eer;
        prop_assert!((got - eer_oracle(&scores, &labels)).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&got));
    }

    #[test]
    fn eer_invariant_under_increasing_maps((scores, labels) in scored(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let base = compute_eer(&scores, &labels).unwrap().eer;
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        prop_assert!((compute_eer(&affine, &labels).unwrap().eer - base).abs() < 1e-9);
        prop_assert!((compute_eer(&cubed, &labels).unwrap().eer - base).abs() < 1e-9);
    }
}

#[test]
fn separated_scores_give_zero_eer() {
    let labels = [Label::Target, Label::Target, Label::Nontarget, Label::Nontarget];
    assert_eq!(compute_eer(&[0.9, 0.8, 0.1, 0.2], &labels).unwrap().eer, 0.0);
    assert_eq!(compute_eer(&[0.1, 0.2, 0.9, 0.8], &labels).unwrap().eer, 100.0);
    assert!(compute_eer(&[0.1, 0.2], &[Label::Target, Label::Target]).is_err());
}

fn random_embeddings(utts: &[(String, String)], dim: usize, seed: u64) -> Vec<SpeakerEmbedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    utts.iter()
        .map(|(u, s)| {
            let v: Vec<f32> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            SpeakerEmbedding::normalized(u.clone(), Some(s.clone()), &v).unwrap()
        })
        .collect()
}

fn utterances(speakers: usize, per: usize) -> Vec<(String, String)> {
    (0..speakers)
        .flat_map(|s| (0..per).map(move |u| (format!("s{s}_u{u}"), format!("s{s}"))))
        .collect()
}

#[test]
fn acc_and_eer_invariant_under_monotone_transform() {
    let utts = utterances(6, 5);
    let trials = build_trials(&utts, 10, 1).unwrap();
    let scores = score_trials(&trials, &random_embeddings(&utts, 16, 2)).unwrap();
    let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
    let labels = trials.labels();
    assert_eq!(compute_acc(&trials, &scores).unwrap(), compute_acc(&trials, &mapped).unwrap());
    assert!((compute_eer(&scores, &labels).unwrap().eer - compute_eer(&mapped, &labels).unwrap().eer).abs() < 1e-9);
}

#[test]
fn random_embeddings_hit_chance_accuracy() {
    let utts = utterances(20, 20);
    let trials = build_trials(&utts, 99, 3).unwrap();
    let (mut acc, mut eer) = (0.0, 0.0);
    let draws = 10;
    for d in 0..draws {
        let s = score_trials(&trials, &random_embeddings(&utts, 64, 10 + d)).unwrap();
        acc += compute_acc(&trials, &s).unwrap();
        eer += compute_eer(&s, &trials.labels()).unwrap().eer;
    }
    let (acc, eer) = (acc / draws as f64, eer / draws as f64);
    assert!((acc - 1.0).abs() < 1.0, "acc {acc}");
    assert!((eer - 50.0).abs() < 3.0, "eer {eer}");
}

#[test]
fn enrolling_copies_returns_the_embedding() {
    let e = SpeakerEmbedding::normalized("u", Some("s".into()), &[0.3, -1.2, 0.5, 2.0]).unwrap();
    for n in 1..=5 {
        let copies = vec![e.clone(); n];
        assert_eq!(enroll(&copies, n).unwrap().vector(), e.vector());
    }
}

#[test]
fn enrolled_model_is_unit_norm() {
    let utts = utterances(1, 4);
    let embs = random_embeddings(&utts, 8, 4);
    let m = enroll(&embs, 4).unwrap();
    assert!((m.norm() - 1.0).abs() < 1e-6);
    assert!(enroll(&embs, 5).is_err());
}

#[test]
fn fusion_ignores_affine_rescaling_of_either_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fused = fuse_scores(&a, &b).unwrap();
    let scaled: Vec<f64> = a.iter().map(|s| 7.5 * s - 3.0).collect();
    let shifted: Vec<f64> = b.iter().map(|s| 0.01 * s + 100.0).collect();
    let again = fuse_scores(&scaled, &shifted).unwrap();
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        idx
    };
    assert_eq!(rank(&fused), rank(&again));
    for (x, y) in fused.iter().zip(&again) {
        assert!((x - y).abs() < 1e-6);
    }
    assert!(fuse_scores(&[1.0, 1.0], &[0.0, 1.0]).is_err());
}

#[test]
fn time_span_cohorts_partition_groups() {
    let utts = utterances(8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let records: Vec<UttRecord> = utts
        .iter()
        .map(|(u, s)| UttRecord {
            utt_id: u.clone(),
            speaker_id: s.clone(),
            path: format!("{u}.wav").into(),
            duration_s: 1.0,
            timestamp: Some(rng.gen_range(0..90 * DAY_S)),
        })
        .collect();
    let manifest = Manifest::new(records).unwrap();
    let trials = build_trials(&utts, 5, 8).unwrap();
    let cohorts = time_span_cohorts(&trials, &manifest, &[7.0, 30.0, 90.0]);
    assert_eq!(cohorts.len(), 3);
    let mut groups: Vec<usize> = cohorts
        .iter()
        .flat_map(|c: &TrialSet| c.groups().map(|g| g[0].group).collect::<Vec<_>>())
        .collect();
    let total: usize = cohorts.iter().map(TrialSet::len).sum();
    groups.sort_unstable();
    let n = groups.len();
    groups.dedup();
    assert_eq!(groups.len(), n, "a group landed in two cohorts");
    assert_eq!(n, trials.num_groups());
    assert_eq!(total, trials.len());
}
