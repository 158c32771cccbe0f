use framelet::network::{build_network, image_to_tensor, write_model, Param, StageConfig, Tensor};
use framelet::noise::{add_noise, NoiseSpec};
use framelet::synth::phantom;
use framelet::train::{adam_step, lr_schedule, train, train_step, AdamState, TrainPlan};

#[test]
fn adam_matches_hand_computation() {
    let mut params = vec![Param {
        name: "w".into(),
        value: Tensor::new(vec![2], vec![1.0f32, -2.0]).unwrap(),
    }];
    let mut state = AdamState::new(&params);
    let grads = [[0.5f64, -0.25], [0.1, 0.3], [-0.4, 0.0]];
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.01f64);
    let mut w = [1.0f64, -2.0];
    let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
    for (t, g) in grads.iter().enumerate() {
        let tensor = Tensor::new(vec![2], g.iter().map(|&x| x as f32).collect()).unwrap();
        adam_step(&mut params, &[tensor], &mut state, lr).unwrap();
        let t = (t + 1) as i32;
        for i in 0..2 {
            let gi = g[i] as f32 as f64;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            w[i] -= lr * mh / (vh.sqrt() + eps);
        }
        for i in 0..2 {
            assert!((params[0].value.data()[i] as f64 - w[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn schedule_halves_every_interval() {
    let plan = TrainPlan {
        base_lr: 0.5,
        halve_every: 3,
        ..TrainPlan::default()
    };
    let got: Vec<f64> = (0..9).map(|e| lr_schedule(e, &plan)).collect();
    assert_eq!(got, [0.5, 0.5, 0.5, 0.25, 0.25, 0.25, 0.125, 0.125, 0.125]);
}

#[test]
fn fixed_batch_overfits() {
    let config = StageConfig::new("22", 8).unwrap();
    let mut net = build_network(&config, 2).unwrap();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for s in 0..3 {
        let clean = phantom(32, 32, s);
        let noisy = add_noise(&clean, &NoiseSpec::gaussian(30.0, s)).unwrap();
        inputs.push(image_to_tensor::<f32>(&noisy));
        targets.push(image_to_tensor::<f32>(&clean));
    }
    let mut state = AdamState::new(net.params());
    let first = train_step(&mut net, &mut state, &inputs, &targets, 1e-3).unwrap();
    let mut last = first;
    for _ in 0..400 {
        last = train_step(&mut net, &mut state, &inputs, &targets, 1e-3).unwrap();
        if last < 0.01 * first {
            break;
        }
    }
    assert!(last < 0.01 * first, "loss {first} -> {last}");
}

#[test]
fn training_is_reproducible() {
    let images: Vec<_> = (0..3).map(|s| phantom(48, 48, s)).collect();
    let net = build_network(&StageConfig::new("22", 4).unwrap(), 1).unwrap();
    let plan = TrainPlan {
        base_lr: 1e-3,
        halve_every: 1,
        epochs: 2,
        steps_per_epoch: 5,
        batch_size: 4,
        patch_size: 16,
        noise: NoiseSpec::gaussian(25.0, 3),
        seed: 3,
    };
    let (a, ha) = train(&net, &images, &plan).unwrap();
    let (b, hb) = train(&net, &images, &plan).unwrap();
    let (mut ba, mut bb) = (Vec::new(), Vec::new());
    write_model(&a, &mut ba).unwrap();
    write_model(&b, &mut bb).unwrap();
    assert_eq!(ba, bb);
    assert_eq!(ha, hb);
    assert_eq!(ha.records.len(), 2);
    assert_eq!(ha.records[1].lr, 5e-4);

    let mut csv = Vec::new();
    ha.write_csv(&mut csv, &["run".into()]).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[..2], ["# run", "epoch,lr,loss,psnr,ssim"]);
    assert_eq!(lines.len(), 4);
}

#[test]
fn bad_plans_are_rejected() {
    let images = vec![phantom(32, 32, 0)];
    let net = build_network(&StageConfig::new("44", 2).unwrap(), 0).unwrap();
    let ok = TrainPlan {
        epochs: 1,
        steps_per_epoch: 1,
        batch_size: 1,
        patch_size: 16,
        ..TrainPlan::default()
    };
    assert!(train(
        &net,
        &images,
        &TrainPlan {
            patch_size: 24,
            ..ok.clone()
        }
    )
    .is_err());
    assert!(train(
        &net,
        &images,
        &TrainPlan {
            patch_size: 48,
            ..ok.clone()
        }
    )
    .is_err());
    assert!(train(
        &net,
        &images,
        &TrainPlan {
            base_lr: 0.0,
            ..ok.clone()
        }
    )
    .is_err());
    assert!(train(&net, &[], &ok).is_err());
    assert!(train(&net, &images, &ok).is_ok());
}
