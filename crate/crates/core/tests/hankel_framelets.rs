use framelet::bank::{dct_basis, haar_block_basis, NonLocalBasis};
use framelet::hankel::{
    framelet_coeffs, framelet_reconstruct, hankel_lift, hankel_svd, patch_lift_2d, patch_unlift_2d,
    unlift, unlift_sum, DEFAULT_RANK_TOL,
};
use framelet::Image;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Singular values by one-sided Jacobi rotations on the columns of `a`,
/// sorted descending.
fn jacobi_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| a[(i, j)]).collect())
        .collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn worked_example_lift() {
    let lift = hankel_lift(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
    let expected = [[1.0, 2.0], [2.0, 3.0], [3.0, 4.0], [4.0, 1.0]];
    for (i, row) in expected.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(lift.matrix()[(i, j)], *v);
        }
    }
    assert_eq!(
        lift.apply(&[1.0, -1.0]).unwrap(),
        vec![-1.0, -1.0, -1.0, 3.0]
    );
    assert!(hankel_lift(&[1.0, 2.0], 3).is_err());
    assert!(hankel_lift(&[1.0, 2.0], 0).is_err());
}

#[test]
fn constant_signal_is_rank_one() {
    let lift = hankel_lift(&[5.0; 12], 4).unwrap();
    let svd = hankel_svd(&lift, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(svd.rank(), 1);
    assert!((svd.s[0] - 5.0 * (48f64).sqrt()).abs() < 1e-10);
}

#[test]
fn singular_local_basis_cannot_reconstruct() {
    let phi = NonLocalBasis::identity(6).unwrap();
    let psi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    let dec = framelet_coeffs(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &phi, &psi).unwrap();
    assert!(framelet_reconstruct(&dec).is_err());
}

#[test]
fn svd_basis_is_completed_to_orthogonal() {
    let f: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
    let svd = hankel_svd(&hankel_lift(&f, 3).unwrap(), DEFAULT_RANK_TOL).unwrap();
    let basis = svd.nonlocal_basis().unwrap();
    let q = basis.matrix();
    let gram = q.transpose() * q;
    assert!(frob(&(gram - DMatrix::identity(10, 10))) < 1e-10);
    for c in 0..svd.rank() {
        let d: f64 = q.column(c).dot(&svd.u.column(c));
        assert!((d.abs() - 1.0).abs() < 1e-10);
    }
}

fn signal(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

fn signal_and_patch() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (2usize..24).prop_flat_map(|n| (signal(n), 1..=n))
}

proptest! {
    #[test]
    fn lift_is_circular_correlation(
        (f, psi) in (2usize..24).prop_flat_map(|n| (signal(n), (1..=n).prop_flat_map(signal)))
    ) {
        let n = f.len();
        let lift = hankel_lift(&f, psi.len()).unwrap();
        let y = lift.apply(&psi).unwrap();
        for i in 0..n {
            let want: f64 = psi.iter().enumerate().map(|(j, p)| f[(i + j) % n] * p).sum();
            prop_assert!((y[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn unlift_inverts_and_sum_is_adjoint((f, d) in signal_and_patch(), seed in any::<u64>()) {
        let lift = hankel_lift(&f, d).unwrap();
        let back = unlift(lift.matrix());
        for (a, b) in f.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // <H f, M> = <f, unlift_sum M>
        let n = f.len();
        let m = DMatrix::from_fn(n, d, |i, j| {
            (((seed ^ ((i * 31 + j) as u64)).wrapping_mul(0x9e3779b97f4a7c15) >> 40) as f64) / 1e7 - 0.8
        });
        let lhs: f64 = lift.matrix().component_mul(&m).sum();
        let g = unlift_sum(&m);
        let rhs: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn singular_values_match_jacobi((f, d) in signal_and_patch()) {
        let lift = hankel_lift(&f, d).unwrap();
        let svd = hankel_svd(&lift, 0.0).unwrap();
        let oracle = jacobi_singular_values(lift.matrix());
        let scale = oracle[0].max(1.0);
        for (k, s) in svd.s.iter().enumerate() {
            prop_assert!((s - oracle[k]).abs() < 1e-10 * scale);
        }
        for s in &oracle[svd.s.len()..] {
            prop_assert!(*s < 1e-10 * scale);
        }
    }

    #[test]
    fn truncation_error_is_tail_norm((f, d) in signal_and_patch()) {
        let lift = hankel_lift(&f, d).unwrap();
        let svd = hankel_svd(&lift, 0.0).unwrap();
        for k in 0..=svd.rank() {
            let err = frob(&(lift.matrix() - svd.truncated(k)));
            prop_assert!((err - svd.tail_norm(k)).abs() < 1e-10 * (1.0 + err));
        }
        let energy: f64 = svd.energy().iter().sum();
        prop_assert!(svd.rank() == 0 || (energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_reconstruction_for_orthogonal_bases(
        (f, d) in (1usize..9).prop_flat_map(|h| (signal(2 * h), 1..=2 * h)),
        which in 0usize..3,
    ) {
        let n = f.len();
        let phi = match which {
            0 => NonLocalBasis::identity(n).unwrap(),
            1 => dct_basis(n).unwrap(),
            _ => haar_block_basis(n).unwrap(),
        };
        let dec = framelet_coeffs(&f, &phi, &DMatrix::identity(d, d)).unwrap();
        let back = framelet_reconstruct(&dec).unwrap();
        for (a, b) in f.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn invertible_local_basis_reconstructs((f, d) in signal_and_patch(), shear in -0.5f64..0.5) {
        let n = f.len();
        let mut psi = DMatrix::<f64>::identity(d, d);
        for i in 0..d.saturating_sub(1) {
            psi[(i, i + 1)] = shear;
        }
        let dec = framelet_coeffs(&f, &dct_basis(n).unwrap(), &psi).unwrap();
        let back = framelet_reconstruct(&dec).unwrap();
        let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in f.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn patch_lift_2d_round_trip(
        (w, h, p) in (1usize..7, 1usize..7).prop_flat_map(|(w, h)| (Just(w), Just(h), 1..=w.min(h))),
        seed in any::<u64>(),
    ) {
        let img = Image::from_fn(w, h, |x, y| ((seed >> ((x + 3 * y) % 60)) & 255) as f64);
        let m = patch_lift_2d(&img, p).unwrap();
        prop_assert_eq!(m.nrows(), w * h);
        prop_assert_eq!(m.ncols(), p * p);
        let back = patch_unlift_2d(&m, w, h).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
