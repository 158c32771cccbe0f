//! Trains a miniature "22" network on synthetic phantoms with additive
//! Gaussian noise (σ = 30) and reports validation PSNR per epoch.
//!
//! ```bash
//! cargo run --release -p framelet --example train_miniature
//! ```

use std::time::Instant;

use framelet::network::{build_network, StageConfig};
use framelet::noise::NoiseSpec;
use framelet::synth::phantom;
use framelet::train::{train_with, TrainPlan};

fn main() -> framelet::Result<()> {
    let images: Vec<_> = (0..4).map(|s| phantom(96, 96, s)).collect();
    let config = StageConfig::new("22", 16)?;
    let net = build_network(&config, 1)?;
    let plan = TrainPlan {
        base_lr: 1e-3,
        halve_every: 4,
        epochs: 8,
        steps_per_epoch: 40,
        batch_size: 8,
        patch_size: 32,
        noise: NoiseSpec::gaussian(30.0, 7),
        seed: 7,
    };
    println!(
        "config {} ({} parameters), {} steps",
        config.digits(),
        net.param_count(),
        plan.epochs * plan.steps_per_epoch
    );
    let start = Instant::now();
    let (_, history) = train_with(&net, &images, &plan, |r| {
        println!(
            "epoch {:>2}  lr {:.2e}  loss {:.6}  psnr {:.2} dB  ssim {:.4}",
            r.epoch, r.lr, r.loss, r.psnr, r.ssim
        );
    })?;
    let last = history.last().expect("at least one epoch");
    println!(
        "noisy input {:.2} dB -> denoised {:.2} dB (+{:.2} dB) in {:.1?}",
        history.input_psnr,
        last.psnr,
        last.psnr - history.input_psnr,
        start.elapsed()
    );
    Ok(())
}
