//! Wavelet pooling and unpooling on a feature map: Haar is lossless,
//! D4 at stride 4 keeps two of four dimensions per block, and both are
//! adjoint pairs.
//!
//! ```bash
//! cargo run -p framelet --example wavelet_pooling
//! ```

use framelet::bank::{d4_bank, haar_bank, to_2d};
use framelet::network::{pool_wavelet, unpool_wavelet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> framelet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (c, s) = (3, 64);
    let x = Tensor::map(
        c,
        s,
        s,
        (0..c * s * s)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect(),
    )?;
    let energy = |t: &Tensor<f32>| t.data().iter().map(|v| (*v as f64).powi(2)).sum::<f64>();

    for bank in [haar_bank(), d4_bank()] {
        let b2 = to_2d(&bank);
        let (low, highs) = pool_wavelet(&x, &b2)?;
        let back = unpool_wavelet(&low, &highs, &b2)?;
        let err = x
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        println!(
            "{}: {:?} -> low {:?} + highs {:?}",
            bank.name(),
            x.dims(),
            low.dims(),
            highs.dims()
        );
        println!(
            "  kept energy {:.1}%  max unpool(pool(x)) - x = {err:.2e}",
            100.0 * (energy(&low) + energy(&highs)) / energy(&x)
        );
    }
    Ok(())
}
