//! Hankel lifting of a 1-D signal, its singular spectrum, and the framelet
//! expansion over identity, DCT, Haar-block and SVD-derived non-local bases.
//!
//! ```bash
//! cargo run -p framelet --example hankel_framelet
//! ```

use framelet::bank::{dct_basis, haar_block_basis, NonLocalBasis};
use framelet::hankel::{
    framelet_coeffs, framelet_reconstruct, hankel_lift, hankel_svd, DEFAULT_RANK_TOL,
};
use nalgebra::DMatrix;

fn main() -> framelet::Result<()> {
    let n = 32;
    let d = 6;
    let f: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (2.0 * std::f64::consts::PI * 3.0 * t).cos()
                + 0.5 * (2.0 * std::f64::consts::PI * 5.0 * t).sin()
        })
        .collect();

    let lift = hankel_lift(&f, d)?;
    let svd = hankel_svd(&lift, DEFAULT_RANK_TOL)?;
    println!("H_{d}(f) is {}x{}, numerical rank {}", n, d, svd.rank());
    let mut cumulative = 0.0;
    for (k, (s, e)) in svd.s.iter().zip(svd.energy()).enumerate() {
        cumulative += e;
        println!(
            "  s{} = {s:9.5}  energy {:5.3}  cumulative {:5.3}  rank-{} error {:.2e}",
            k + 1,
            e,
            cumulative,
            k + 1,
            svd.tail_norm(k + 1)
        );
    }

    let bases: Vec<(&str, NonLocalBasis)> = vec![
        ("identity", NonLocalBasis::identity(n)?),
        ("DCT", dct_basis(n)?),
        ("Haar block", haar_block_basis(n)?),
        ("SVD", svd.nonlocal_basis()?),
    ];
    let psi = DMatrix::identity(d, d);
    for (name, phi) in bases {
        let dec = framelet_coeffs(&f, &phi, &psi)?;
        let back = framelet_reconstruct(&dec)?;
        let err = f
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let total: f64 = dec.coeffs.iter().map(|c| c * c).sum();
        let top_rows: f64 = (0..4).map(|r| dec.coeffs.row(r).norm_squared()).sum();
        println!(
            "{name:>10}: reconstruction error {err:.2e}, first 4 coefficient rows carry {:.1}% of the energy",
            100.0 * top_rows / total
        );
    }
    Ok(())
}
