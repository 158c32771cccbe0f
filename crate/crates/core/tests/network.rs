use std::sync::Arc;

use framelet::bank::{d4_bank, haar_bank, to_2d, FilterBank2D};
use framelet::network::{
    build_network, image_to_tensor, pool_wavelet, read_model, unpool_wavelet, write_model, Network,
    StageConfig, Tensor, ValueGraph,
};
use framelet::train::mse_loss;
use framelet::Image;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..c * h * w)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::map(c, h, w, data).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Every conv copies input channel `i` to output channel `i` through its
/// center tap, so an all-Haar network reproduces non-negative input.
fn identity_network(digits: &str, base: usize) -> Network {
    let config = StageConfig::new(digits, base).unwrap();
    Network::from_fn(&config, |name, dims| {
        let n: usize = dims.iter().product();
        if name.ends_with(".bias") {
            return vec![0.0; n];
        }
        let (cout, cin, k) = (dims[0], dims[1], dims[2]);
        let mut w = vec![0.0f32; n];
        for o in 0..cout.min(cin) {
            w[((o * cin + o) * k + k / 2) * k + k / 2] = 1.0;
        }
        w
    })
    .unwrap()
}

#[test]
fn output_shape_matches_input_for_every_config() {
    for (digits, size) in [
        ("2", 8),
        ("4", 8),
        ("22", 16),
        ("24", 16),
        ("42", 16),
        ("2222", 32),
        ("4422", 64),
    ] {
        let net = build_network(&StageConfig::new(digits, 2).unwrap(), 3).unwrap();
        let img = Image::from_fn(size, size + net.config().input_multiple(), |x, y| {
            (x * y % 256) as f64
        });
        let out = net.denoise(&img).unwrap();
        assert_eq!(
            (out.width(), out.height()),
            (img.width(), img.height()),
            "{digits}"
        );
    }
}

#[test]
fn haar_identity_network_is_lossless() {
    for digits in ["2", "22", "222"] {
        let net = identity_network(digits, 1);
        let img = Image::from_fn(32, 16, |x, y| ((x * 37 + y * 11) % 256) as f64);
        let out = net.denoise(&img).unwrap();
        for (a, b) in img.as_slice().iter().zip(out.as_slice()) {
            assert!((a - b).abs() < 1e-3, "{digits}: {a} vs {b}");
        }
    }
}

#[test]
fn d4_identity_network_is_lossy() {
    let net = identity_network("4", 1);
    let img = Image::from_fn(16, 16, |x, y| ((x * 37 + y * 11) % 256) as f64);
    let out = net.denoise(&img).unwrap();
    let err: f64 = img
        .as_slice()
        .iter()
        .zip(out.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    assert!(err > 1.0);
}

#[test]
fn indivisible_input_is_rejected_and_padding_recovers() {
    let net = build_network(&StageConfig::new("42", 2).unwrap(), 0).unwrap();
    let img = Image::filled(20, 12, 100.0);
    assert!(net.denoise(&img).is_err());
    let out = net.denoise_padded(&img).unwrap();
    assert_eq!((out.width(), out.height()), (20, 12));
}

#[test]
fn model_file_round_trips() {
    let net = build_network(&StageConfig::new("42", 3).unwrap().with_residual(true), 11).unwrap();
    let mut buf = Vec::new();
    write_model(&net, &mut buf).unwrap();
    let back = read_model(buf.as_slice()).unwrap();
    assert_eq!(back, net);
    assert!(back.config().residual);
    let img = Image::from_fn(16, 16, |x, y| (x + 3 * y) as f64);
    assert_eq!(back.denoise(&img).unwrap(), net.denoise(&img).unwrap());
    for cut in [0, 5, buf.len() / 2, buf.len() - 1] {
        assert!(read_model(&buf[..cut]).is_err());
    }
}

#[test]
fn d4_network_gradients_match_finite_differences() {
    // parameters on a 2^-12 grid so the 2^-16 probe is exact in f32
    let config = StageConfig::new("4", 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Network::from_fn(&config, |_, dims| {
        let n: usize = dims.iter().product();
        (0..n)
            .map(|_| (rng.random_range(-0.4f64..0.4) * 4096.0).round() as f32 / 4096.0)
            .collect()
    })
    .unwrap();
    let x = random_map(1, 8, 8, 1)
        .data()
        .iter()
        .map(|v| v.abs())
        .collect();
    let x = Tensor::map(1, 8, 8, x).unwrap();
    let target = random_map(1, 8, 8, 2);

    let loss = |net: &Network| -> f64 {
        let y = net.forward_tensor(&x).unwrap();
        mse_loss(&[y], std::slice::from_ref(&target)).unwrap().0
    };
    let mut graph = ValueGraph::new();
    let y = net.forward_recorded(&mut graph, &x).unwrap();
    let (_, og) = mse_loss(&[y], std::slice::from_ref(&target)).unwrap();
    let grads = net.backward(&mut graph, &og[0]).unwrap();

    let h = 2f32.powi(-16);
    for p in 0..net.params().len() {
        let name = net.params()[p].name.clone();
        let analytic = grads.get(&name).unwrap().data().to_vec();
        let mut fd = Vec::new();
        for i in 0..analytic.len() {
            let orig = net.params()[p].value.data()[i];
            net.params_mut()[p].value.data_mut()[i] = orig + h;
            let up = loss(&net);
            net.params_mut()[p].value.data_mut()[i] = orig - h;
            let down = loss(&net);
            net.params_mut()[p].value.data_mut()[i] = orig;
            fd.push((up - down) / (2.0 * h as f64));
        }
        let diff: f64 = fd
            .iter()
            .zip(&analytic)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = fd
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(analytic.iter().map(|v| v * v).sum::<f64>().sqrt());
        assert!(
            norm == 0.0 || diff / norm < 1e-4,
            "{name}: relative error {}",
            diff / norm
        );
    }
}

fn bank(haar: bool) -> Arc<FilterBank2D> {
    Arc::new(to_2d(&if haar { haar_bank() } else { d4_bank() }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pooling_is_adjoint(seed in any::<u64>(), c in 1usize..4, haar in any::<bool>()) {
        let b = bank(haar);
        let x = random_map(c, 16, 16, seed);
        let s = b.stride();
        let lo = random_map(c, 16 / s, 16 / s, seed ^ 1);
        let hi = random_map(3 * c, 16 / s, 16 / s, seed ^ 2);
        let (plo, phi) = pool_wavelet(&x, &b).unwrap();
        let lhs = dot(&plo, &lo) + dot(&phi, &hi);
        let rhs = dot(&x, &unpool_wavelet(&lo, &hi, &b).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn haar_pooling_round_trips(seed in any::<u64>(), c in 1usize..4) {
        let b = bank(true);
        let x = random_map(c, 16, 8, seed);
        let (lo, hi) = pool_wavelet(&x, &b).unwrap();
        let y = unpool_wavelet(&lo, &hi, &b).unwrap();
        for (p, q) in x.data().iter().zip(y.data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic_and_finite(seed in 0u64..1000) {
        let net = build_network(&StageConfig::new("24", 2).unwrap(), seed).unwrap();
        let img = Image::from_fn(16, 16, |x, y| ((x * 13 + y * 7 + seed as usize) % 256) as f64);
        let a = net.denoise(&img).unwrap();
        prop_assert!(a.as_slice().iter().all(|v| v.is_finite()));
        prop_assert_eq!(a, net.denoise(&img).unwrap());
        let t = image_to_tensor::<f32>(&img);
        prop_assert_eq!(t.dims(), &[1, 16, 16]);
    }
}
