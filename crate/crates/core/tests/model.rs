//! Embedding networks end to end: shapes, norms, batching and checkpoints.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxembed::frontend::FeatureMatrix;
use voxembed::model::{batch_input, forward, forward_embed, load_checkpoint, load_checkpoint_for, save_checkpoint, ArchSpec, ModelParams};
use voxembed::nn::Mode;

fn features(frames: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..frames * 64).map(|_| rng.gen_range(-2.0..2.0)).collect();
    FeatureMatrix::new(format!("u{seed}"), "s", 10.0, 64, data).unwrap()
}

fn toy(name: &str) -> ModelParams<f32> {
    ModelParams::build(ArchSpec::by_name(name).unwrap(), 3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn embeddings_are_unit_norm_for_any_length(frames in 16usize..=1000, seed in any::<u64>(), gru in any::<bool>()) {
        let params = toy(if gru { "toy-gru" } else { "toy-rescnn" });
        let e = forward_embed(&params, &features(frames, seed)).unwrap();
        prop_assert_eq!(e.dim(), 64);
        prop_assert!((e.norm() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn too_short_input_is_rejected() {
    for name in ["toy-rescnn", "toy-gru"] {
        let params = toy(name);
        let min = params.arch.min_frames();
        assert!(forward_embed(&params, &features(min, 1)).is_ok());
        if min > 1 {
            assert!(forward_embed(&params, &features(min - 1, 1)).is_err());
        }
    }
}

#[test]
fn inference_does_not_mix_batch_rows() {
    for name in ["toy-rescnn", "toy-gru"] {
        let params = toy(name);
        let feats: Vec<FeatureMatrix> = (0..3).map(|s| features(40, s)).collect();
        let x = batch_input::<f32>(&feats.iter().collect::<Vec<_>>()).unwrap();
        let joint = forward(&params, &x, Mode::Infer).unwrap().embeddings;
        for (i, f) in feats.iter().enumerate() {
            let alone = forward_embed(&params, f).unwrap();
            for (a, b) in joint.data()[i * 64..(i + 1) * 64].iter().zip(alone.vector()) {
                assert!((a - b).abs() < 1e-5, "{name} row {i}");
            }
        }
    }
}

#[test]
fn repeated_utterance_keeps_its_embedding() {
    let params = toy("toy-rescnn");
    let f = features(300, 7);
    let mut doubled = f.data().to_vec();
    doubled.extend_from_slice(f.data());
    let twice = f.with_data(doubled).unwrap();
    let a = forward_embed(&params, &f).unwrap();
    let b = forward_embed(&params, &twice).unwrap();
    let cos: f64 = a.vector().iter().zip(b.vector()).map(|(x, y)| *x as f64 * *y as f64).sum();
    assert!(cos > 0.99, "cosine {cos}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let params = toy("toy-gru");
    save_checkpoint(&params, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.tensors(), params.tensors());
    assert_eq!(back.buffers(), params.buffers());
    let f = features(50, 1);
    assert_eq!(forward_embed(&back, &f).unwrap().vector(), forward_embed(&params, &f).unwrap().vector());
    assert!(load_checkpoint_for(&path, &ArchSpec::toy_rescnn()).is_err());
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&toy("toy-rescnn"), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    std::fs::write(&path, &bad_magic).unwrap();
    assert!(load_checkpoint(&path).is_err());
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    std::fs::write(&path, &bad_version).unwrap();
    assert!(load_checkpoint(&path).is_err());
    for cut in [10, 40, bytes.len() / 2, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(load_checkpoint(&path).is_err(), "truncated at {cut}");
    }
}

#[test]
fn same_seed_same_initialization() {
    let a = toy("toy-rescnn");
    let b = toy("toy-rescnn");
    let c = ModelParams::<f32>::build(ArchSpec::toy_rescnn(), 4).unwrap();
    assert_eq!(a.tensors(), b.tensors());
    assert_ne!(a.tensors(), c.tensors());
}
