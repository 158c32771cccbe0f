//! Prints the Haar and Daubechies-4 taps, checks their orthonormality and
//! vanishing moments, and round-trips a signal through each bank.
//!
//! ```bash
//! cargo run -p framelet --example filter_banks
//! ```

use framelet::bank::{bank_from_digit, to_2d, Subband};

fn main() -> framelet::Result<()> {
    let signal: Vec<f64> = (0..16)
        .map(|i| (i as f64 * 0.4).sin() * 10.0 + i as f64)
        .collect();
    for digit in ['2', '4'] {
        let bank = bank_from_digit(digit)?;
        let norm: f64 = bank.low().iter().map(|v| v * v).sum();
        let cross: f64 = bank.low().iter().zip(bank.high()).map(|(a, b)| a * b).sum();
        let m1: f64 = bank
            .high()
            .iter()
            .enumerate()
            .map(|(k, v)| k as f64 * v)
            .sum();
        println!("{} (digit {digit}, stride {})", bank.name(), bank.stride());
        println!("  low  {:?}", bank.low());
        println!("  high {:?}", bank.high());
        println!("  |low|^2 = {norm:.15}  <low,high> = {cross:.1e}  first moment = {m1:.1e}");

        let (lo, hi) = bank.analyze(&signal)?;
        let back = bank.synthesize(&lo, &hi)?;
        let err = signal
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "  {} samples -> {} + {} coefficients, synthesis error {err:.2e}",
            signal.len(),
            lo.len(),
            hi.len()
        );

        let b2 = to_2d(&bank);
        for band in Subband::ALL {
            let f = b2.filter(band);
            println!("  {band:?} filter sum {:+.4}", f.iter().sum::<f64>());
        }
    }
    Ok(())
}
