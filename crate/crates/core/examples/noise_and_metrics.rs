//! Speckle and Gaussian corruption of a synthetic image, PSNR / SSIM of the
//! result, and σ calibration to a target input PSNR.
//!
//! ```bash
//! cargo run -p framelet --example noise_and_metrics
//! ```

use framelet::metrics::{evaluate, SsimParams};
use framelet::noise::{add_noise, calibrate_noise, NoiseSpec};
use framelet::synth::phantom;

fn main() -> framelet::Result<()> {
    let images: Vec<_> = (0..3).map(|s| phantom(128, 128, s)).collect();
    let params = SsimParams::default();

    for spec in [
        NoiseSpec::gaussian(15.0, 1),
        NoiseSpec::gaussian(30.0, 1),
        NoiseSpec::speckle(0.1, 1),
        NoiseSpec::speckle(0.3, 1),
    ] {
        let m = evaluate(&images[0], &add_noise(&images[0], &spec)?, &params)?;
        println!(
            "{:>8} sigma {:>5}: psnr {:6.2} dB  ssim {:.4}",
            spec.model.name(),
            spec.sigma,
            m.psnr_db,
            m.ssim
        );
    }

    let target = 20.0;
    let cal = calibrate_noise(&images, target, &NoiseSpec::speckle(0.0, 5))?;
    println!(
        "speckle sigma for a {target} dB input: {:.4} (reaches {:.3} dB after {} probes)",
        cal.sigma,
        cal.psnr_db,
        cal.trace.len()
    );
    Ok(())
}
