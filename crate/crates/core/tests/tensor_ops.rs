//! Convolution, matrix products and batch normalization against loop oracles.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use voxembed::nn::gradcheck::random_tensor;
use voxembed::nn::{BatchNorm, BnParams, Conv2d, Mode};
use voxembed::tensor::{gemm, Mat};
use voxembed::Tensor;

fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, stride: (usize, usize), pad: (usize, usize)) -> Vec<f64> {
    let [b, ci, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [co, _, kh, kw] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
    let oh = (h + 2 * pad.0 - kh) / stride.0 + 1;
    let ow = (w + 2 * pad.1 - kw) / stride.1 + 1;
    let xv = |n: usize, c: usize, i: isize, j: isize| {
        if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
            0.0
        } else {
            x.data()[((n * ci + c) * h + i as usize) * w + j as usize]
        }
    };
    let mut out = Vec::with_capacity(b * co * oh * ow);
    for n in 0..b {
        for o in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = 0.0;
                    for c in 0..ci {
                        for p in 0..kh {
                            for q in 0..kw {
                                let ii = (i * stride.0 + p) as isize - pad.0 as isize;
                                let jj = (j * stride.1 + q) as isize - pad.1 as isize;
                                s += xv(n, c, ii, jj) * k.data()[((o * ci + c) * kh + p) * kw + q];
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv2d_matches_nested_loops(
        seed in any::<u64>(),
        b in 1usize..3, ci in 1usize..4, co in 1usize..4,
        h in 1usize..9, w in 1usize..9,
        kh in 1usize..6, kw in 1usize..6,
        sh in 1usize..3, sw in 1usize..3,
        ph in 0usize..3, pw in 0usize..3,
    ) {
        prop_assume!(kh <= h + 2 * ph && kw <= w + 2 * pw);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&[b, ci, h, w], &mut rng);
        let k = random_tensor(&[co, ci, kh, kw], &mut rng);
        let got = Conv2d::new((sh, sw), (ph, pw)).forward(&x, &k).unwrap();
        let want = conv_oracle(&x, &k, (sh, sw), (ph, pw));
        prop_assert_eq!(got.len(), want.len());
        for (a, b) in got.data().iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gemm_matches_nested_loops(seed in any::<u64>(), m in 1usize..7, k in 1usize..7, n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tensor(&[m, k], &mut rng);
        let b = random_tensor(&[k, n], &mut rng);
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, 1.0, Mat::N(a.data()), Mat::N(b.data()), 0.0, &mut c);
        for i in 0..m {
            for j in 0..n {
                let s: f64 = (0..k).map(|p| a.data()[i * k + p] * b.data()[p * n + j]).sum();
                prop_assert!((c[i * n + j] - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn conv_rejects_mismatched_channels() {
    let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
    let k = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
    assert!(Conv2d::new((1, 1), (1, 1)).forward(&x, &k).is_err());
}

#[test]
fn batchnorm_train_mode_normalizes_each_unit() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (b, c, t, f) = (3, 2, 5, 4);
    let x = random_tensor(&[b, c, t, f], &mut rng).map(|v| 3.0 * v + 1.5);
    let units = c * f;
    let (gamma, beta) = (Tensor::full(&[units], 1.0), Tensor::zeros(&[units]));
    let (rm, rv) = (Tensor::zeros(&[units]), Tensor::full(&[units], 1.0));
    let bn = BatchNorm::default();
    let p = BnParams {
        gamma: &gamma,
        beta: &beta,
        running_mean: &rm,
        running_var: &rv,
    };
    let (y, _) = bn.forward(&x, p, Mode::Train).unwrap();
    for ch in 0..c {
        for fr in 0..f {
            let vals: Vec<f64> = (0..b)
                .flat_map(|n| (0..t).map(move |ti| ((n * c + ch) * t + ti) * f + fr))
                .map(|i| y.data()[i])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9, "unit ({ch},{fr}) mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "unit ({ch},{fr}) var {var}");
        }
    }
    let (y_inf, _) = bn.forward(&x, p, Mode::Infer).unwrap();
    let scale = 1.0 / (1.0 + bn.eps).sqrt();
    for (a, v) in y_inf.data().iter().zip(x.data()) {
        assert!((a - v * scale).abs() < 1e-12);
    }
}
