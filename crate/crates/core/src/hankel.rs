//! Circular Hankel lifting and the convolution framelet expansion.
//!
//! For a signal `f` of length `n` and a patch size `d`, the lift `H_d(f)` is
//! the `n x d` matrix with `H[i][j] = f[(i + j) mod n]`. Multiplying it by a
//! local filter `ψ` is circular cross-correlation, so `Φᵀ H_d(f) Ψ` collects
//! the interactions of `f` with every non-local / local basis pair.
//!
//! The lift is an isometry up to scale: its adjoint (sum along circular
//! diagonals) satisfies `Hᵀ∘H = d·I`, which is where the `1/d` of the
//! expansion comes from.

use nalgebra::DMatrix;

use crate::bank::{BasisKind, NonLocalBasis};
use crate::error::{Error, Result};
use crate::Image;

/// Default relative cut-off for singular values.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HankelLift {
    source_length: usize,
    patch_size: usize,
    matrix: DMatrix<f64>,
}

impl HankelLift {
    pub fn source_length(&self) -> usize {
        self.source_length
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `H_d(f)·ψ`, i.e. circular cross-correlation of `f` with `ψ`.
    pub fn apply(&self, psi: &[f64]) -> Result<Vec<f64>> {
        if psi.len() != self.patch_size {
            return Err(Error::Shape(format!(
                "filter of length {} for patch size {}",
                psi.len(),
                self.patch_size
            )));
        }
        let v = &self.matrix * DMatrix::from_column_slice(psi.len(), 1, psi);
        Ok(v.as_slice().to_vec())
    }
}

pub fn hankel_lift(f: &[f64], d: usize) -> Result<HankelLift> {
    let n = f.len();
    if d == 0 || d > n {
        return Err(Error::InvalidPatch {
            patch: d,
            length: n,
        });
    }
    let matrix = DMatrix::from_fn(n, d, |i, j| f[(i + j) % n]);
    Ok(HankelLift {
        source_length: n,
        patch_size: d,
        matrix,
    })
}

/// Adjoint of the lift: entry `(i, j)` is added back onto position
/// `(i + j) mod n`. Each position receives exactly `d` contributions.
pub fn unlift_sum(matrix: &DMatrix<f64>) -> Vec<f64> {
    let n = matrix.nrows();
    let mut out = vec![0.0; n];
    for j in 0..matrix.ncols() {
        for i in 0..n {
            out[(i + j) % n] += matrix[(i, j)];
        }
    }
    out
}

/// Left inverse of the lift: diagonal averaging.
pub fn unlift(matrix: &DMatrix<f64>) -> Vec<f64> {
    let d = matrix.ncols() as f64;
    let mut out = unlift_sum(matrix);
    out.iter_mut().for_each(|v| *v /= d);
    out
}

/// Thin SVD of a Hankel lift, truncated to the numerical rank.
#[derive(Debug, Clone)]
pub struct HankelSvd {
    /// `n x r` left singular vectors.
    pub u: DMatrix<f64>,
    /// `r` singular values, non-increasing.
    pub s: Vec<f64>,
    /// `d x r` right singular vectors.
    pub v: DMatrix<f64>,
}

impl HankelSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U_k diag(S_k) V_kᵀ` using the leading `k` triplets (clamped to rank).
    pub fn truncated(&self, k: usize) -> DMatrix<f64> {
        let k = k.min(self.rank());
        let u = self.u.columns(0, k);
        let v = self.v.columns(0, k);
        let mut us = u.into_owned();
        for (j, s) in self.s.iter().take(k).enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * v.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.truncated(self.rank())
    }

    /// `√(Σ_{i≥k} S_i²)`: the Frobenius error of the rank-`k` truncation.
    pub fn tail_norm(&self, k: usize) -> f64 {
        self.s.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Fraction of the total squared singular mass carried by each triplet.
    pub fn energy(&self) -> Vec<f64> {
        let total: f64 = self.s.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return vec![0.0; self.s.len()];
        }
        self.s.iter().map(|s| s * s / total).collect()
    }

    /// Completes `U` to an orthogonal `n x n` non-local basis.
    ///
    /// The first `r` columns equal those of `U` up to sign.
    pub fn nonlocal_basis(&self) -> Result<NonLocalBasis> {
        let n = self.u.nrows();
        let r = self.rank();
        let mut stacked = DMatrix::zeros(n, r + n);
        stacked.columns_mut(0, r).copy_from(&self.u);
        stacked
            .columns_mut(r, n)
            .copy_from(&DMatrix::<f64>::identity(n, n));
        let q = stacked.qr().q();
        NonLocalBasis::new(q, BasisKind::SvdDerived)
    }
}

pub fn hankel_svd(lift: &HankelLift, rank_tol: f64) -> Result<HankelSvd> {
    if !(rank_tol >= 0.0) || !rank_tol.is_finite() {
        return Err(Error::Parameter(format!(
            "rank tolerance must be finite and non-negative, got {rank_tol}"
        )));
    }
    let h = lift.matrix();
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput(
            "Hankel matrix has non-finite entries".into(),
        ));
    }
    let (n, d) = (h.nrows(), h.ncols());
    let svd = faer::Mat::<f64>::from_fn(n, d, |i, j| h[(i, j)])
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD failed: {e:?}")))?;
    let (u, v, sv) = (svd.U(), svd.V(), svd.S().column_vector());
    let largest = if sv.nrows() > 0 { sv[0] } else { 0.0 };
    let r = (0..sv.nrows())
        .take_while(|&i| sv[i] > 0.0 && sv[i] >= rank_tol * largest)
        .count();
    let uu = DMatrix::from_fn(n, r, |i, k| u[(i, k)]);
    let vv = DMatrix::from_fn(d, r, |j, k| v[(j, k)]);
    let s = (0..r).map(|k| sv[k]).collect();
    Ok(HankelSvd { u: uu, s, v: vv })
}

#[derive(Debug, Clone)]
pub struct FrameletDecomposition {
    pub phi: NonLocalBasis,
    /// `d x d` local basis; columns are the local filters.
    pub psi: DMatrix<f64>,
    /// `n x d` coefficients `Φᵀ H_d(f) Ψ`.
    pub coeffs: DMatrix<f64>,
    pub patch_size: usize,
}

pub fn framelet_coeffs(
    f: &[f64],
    phi: &NonLocalBasis,
    psi: &DMatrix<f64>,
) -> Result<FrameletDecomposition> {
    let n = f.len();
    if phi.dim() != n {
        return Err(Error::Shape(format!(
            "non-local basis is {}x{} but the signal has length {n}",
            phi.dim(),
            phi.dim()
        )));
    }
    if !psi.is_square() {
        return Err(Error::Shape(format!(
            "local basis must be square, got {}x{}",
            psi.nrows(),
            psi.ncols()
        )));
    }
    let d = psi.nrows();
    let lift = hankel_lift(f, d)?;
    let coeffs = phi.matrix().transpose() * lift.matrix() * psi;
    Ok(FrameletDecomposition {
        phi: phi.clone(),
        psi: psi.clone(),
        coeffs,
        patch_size: d,
    })
}

/// Framelet expansion: `f̂ = (1/d) · unlift(Φ C Ψ⁻¹)`.
///
/// For orthogonal `Ψ` the inverse is `Ψᵀ`; a general invertible `Ψ` is
/// accepted as well.
pub fn framelet_reconstruct(dec: &FrameletDecomposition) -> Result<Vec<f64>> {
    let d = dec.patch_size;
    if dec.psi.nrows() != d || dec.psi.ncols() != d {
        return Err(Error::Shape("local basis does not match patch size".into()));
    }
    if dec.coeffs.nrows() != dec.phi.dim() || dec.coeffs.ncols() != d {
        return Err(Error::Shape(
            "coefficient matrix does not match bases".into(),
        ));
    }
    let sv = faer::Mat::<f64>::from_fn(d, d, |i, j| dec.psi[(i, j)])
        .singular_values()
        .map_err(|e| Error::Numeric(format!("SVD failed: {e:?}")))?;
    let (smax, smin) = sv
        .iter()
        .fold((0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    if !(smax > 0.0) || smin <= smax * 1e-12 {
        return Err(Error::ReconstructionImpossible);
    }
    let psi_inv = dec
        .psi
        .clone()
        .try_inverse()
        .ok_or(Error::ReconstructionImpossible)?;
    let lifted = dec.phi.matrix() * &dec.coeffs * psi_inv;
    Ok(unlift(&lifted))
}

/// 2-D analogue of the lift: one row per pixel (row-major), holding the
/// `p x p` patch anchored at that pixel with circular wrap-around.
pub fn patch_lift_2d(img: &Image, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidPatch {
            patch: 0,
            length: img.width().min(img.height()),
        });
    }
    let (w, h) = (img.width(), img.height());
    Ok(DMatrix::from_fn(w * h, p * p, |row, col| {
        let (y, x) = (row / w, row % w);
        let (u, v) = (col / p, col % p);
        img.get((x + v) % w, (y + u) % h)
    }))
}

/// Diagonal-averaging inverse of [`patch_lift_2d`].
pub fn patch_unlift_2d(matrix: &DMatrix<f64>, width: usize, height: usize) -> Result<Image> {
    let p2 = matrix.ncols();
    let p = (p2 as f64).sqrt().round() as usize;
    if p * p != p2 || p == 0 || matrix.nrows() != width * height {
        return Err(Error::Shape(format!(
            "{}x{} patch matrix for a {width}x{height} image",
            matrix.nrows(),
            p2
        )));
    }
    let mut acc = vec![0.0; width * height];
    for row in 0..width * height {
        let (y, x) = (row / width, row % width);
        for col in 0..p2 {
            let (u, v) = (col / p, col % p);
            acc[((y + u) % height) * width + (x + v) % width] += matrix[(row, col)];
        }
    }
    let scale = 1.0 / p2 as f64;
    acc.iter_mut().for_each(|v| *v *= scale);
    Image::new(width, height, acc)
}
