//! Fixed non-local bases: Haar and Daubechies-4 filter banks, block-Haar and
//! DCT-II matrices.
//!
//! A [`FilterBank`] is a pair of analysis taps (low, high) bound to a
//! decimation stride. Both banks used by the network have `length <= stride`,
//! so every analysis window is disjoint from its neighbours and no boundary
//! rule is ever needed.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance used when validating orthonormality of user-supplied bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    name: &'static str,
    low: Vec<f64>,
    high: Vec<f64>,
    stride: usize,
}

impl FilterBank {
    #[inline]
    pub fn name(&self) -> &'static str {
        self.name
    }

    #[inline]
    pub fn low(&self) -> &[f64] {
        &self.low
    }

    #[inline]
    pub fn high(&self) -> &[f64] {
        &self.high
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Tap count.
    #[inline]
    pub fn length(&self) -> usize {
        self.low.len()
    }

    /// The configuration digit that selects this bank.
    pub fn digit(&self) -> char {
        match self.stride {
            2 => '2',
            _ => '4',
        }
    }

    /// Strided correlation with both taps. Returns `(low_band, high_band)`,
    /// each of length `signal.len() / stride`.
    pub fn analyze(&self, signal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if !signal.len().is_multiple_of(self.stride) {
            return Err(Error::Shape(format!(
                "signal length {} not divisible by stride {}",
                signal.len(),
                self.stride
            )));
        }
        let bands = signal.len() / self.stride;
        let mut lo = Vec::with_capacity(bands);
        let mut hi = Vec::with_capacity(bands);
        for k in 0..bands {
            let window = &signal[k * self.stride..k * self.stride + self.length()];
            lo.push(dot(&self.low, window));
            hi.push(dot(&self.high, window));
        }
        Ok((lo, hi))
    }

    /// Transposed strided convolution with the same taps (adjoint of
    /// [`analyze`](Self::analyze)).
    pub fn synthesize(&self, low_band: &[f64], high_band: &[f64]) -> Result<Vec<f64>> {
        if low_band.len() != high_band.len() {
            return Err(Error::Shape(format!(
                "band lengths differ: {} vs {}",
                low_band.len(),
                high_band.len()
            )));
        }
        let mut out = vec![0.0; low_band.len() * self.stride];
        for (k, (&a, &d)) in low_band.iter().zip(high_band).enumerate() {
            for u in 0..self.length() {
                out[k * self.stride + u] += self.low[u] * a + self.high[u] * d;
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `high[k] = (-1)^k low[L-1-k]`.
fn alternating_flip(low: &[f64]) -> Vec<f64> {
    let n = low.len();
    (0..n)
        .map(|k| {
            let v = low[n - 1 - k];
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Two-tap Haar bank at stride 2: low = [1, 1]/√2, high = [1, -1]/√2.
pub fn haar_bank() -> FilterBank {
    let low = vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2];
    FilterBank {
        name: "haar",
        high: alternating_flip(&low),
        low,
        stride: 2,
    }
}

/// Four-tap Daubechies scaling filter (two vanishing moments) at stride 4.
pub fn d4_bank() -> FilterBank {
    let s3 = 3f64.sqrt();
    let norm = 4.0 * 2f64.sqrt();
    let low = vec![
        (1.0 + s3) / norm,
        (3.0 + s3) / norm,
        (3.0 - s3) / norm,
        (1.0 - s3) / norm,
    ];
    FilterBank {
        name: "d4",
        high: alternating_flip(&low),
        low,
        stride: 4,
    }
}

/// `'2'` selects Haar at stride 2, `'4'` selects D4 at stride 4.
pub fn bank_from_digit(digit: char) -> Result<FilterBank> {
    match digit {
        '2' => Ok(haar_bank()),
        '4' => Ok(d4_bank()),
        other => Err(Error::UnknownWaveletCode(other)),
    }
}

/// Position of a separable subband in [`FilterBank2D::subbands`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subband {
    LL = 0,
    LH = 1,
    HL = 2,
    HH = 3,
}

impl Subband {
    pub const ALL: [Subband; 4] = [Subband::LL, Subband::LH, Subband::HL, Subband::HH];
}

/// Separable tensor-product extension of a [`FilterBank`].
///
/// Each subband filter is `length x length`, row-major, with the first
/// factor acting along rows (vertical) and the second along columns:
/// `LH[u][v] = low[u] * high[v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank2D {
    base: FilterBank,
    subbands: [Vec<f64>; 4],
}

impl FilterBank2D {
    pub fn base(&self) -> &FilterBank {
        &self.base
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.base.stride
    }

    #[inline]
    pub fn length(&self) -> usize {
        self.base.length()
    }

    pub fn subbands(&self) -> &[Vec<f64>; 4] {
        &self.subbands
    }

    #[inline]
    pub fn filter(&self, band: Subband) -> &[f64] {
        &self.subbands[band as usize]
    }
}

pub fn to_2d(bank: &FilterBank) -> FilterBank2D {
    let outer = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .flat_map(|&x| b.iter().map(move |&y| x * y))
            .collect()
    };
    let (l, h) = (bank.low(), bank.high());
    FilterBank2D {
        base: bank.clone(),
        subbands: [outer(l, l), outer(l, h), outer(h, l), outer(h, h)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    HaarBlock,
    Dct,
    SvdDerived,
    Identity,
}

/// Square orthogonal matrix Φ whose columns are the non-local basis vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NonLocalBasis {
    matrix: DMatrix<f64>,
    kind: BasisKind,
}

impl NonLocalBasis {
    /// Wraps `matrix` after checking that it is square with orthonormal
    /// columns (within [`ORTHONORMAL_TOL`]).
    pub fn new(matrix: DMatrix<f64>, kind: BasisKind) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "non-local basis must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let gram = matrix.transpose() * &matrix;
        let err = (gram - DMatrix::identity(matrix.nrows(), matrix.nrows())).amax();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::Parameter(format!(
                "basis columns are not orthonormal (max deviation {err:e})"
            )));
        }
        Ok(Self { matrix, kind })
    }

    pub fn identity(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(Self {
            matrix: DMatrix::identity(n, n),
            kind: BasisKind::Identity,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidDimension(
            "basis size must be positive".into(),
        ))
    } else {
        Ok(())
    }
}

/// Orthonormal DCT-II basis: column `k` is
/// `α_k cos(π (2i + 1) k / 2n)` with `α_0 = √(1/n)` and `α_k = √(2/n)`.
pub fn dct_basis(n: usize) -> Result<NonLocalBasis> {
    check_dim(n)?;
    let nf = n as f64;
    let matrix = DMatrix::from_fn(n, n, |i, k| {
        let alpha = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        alpha * (PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * nf)).cos()
    });
    Ok(NonLocalBasis {
        matrix,
        kind: BasisKind::Dct,
    })
}

/// Block Haar basis `[Φ_low Φ_high]` for an even `n`: column `k < n/2` holds
/// `1/√2` at rows `2k, 2k+1`; column `n/2 + k` holds `+1/√2, -1/√2` there.
pub fn haar_block_basis(n: usize) -> Result<NonLocalBasis> {
    check_dim(n)?;
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidDimension(format!(
            "block Haar basis needs an even size, got {n}"
        )));
    }
    let half = n / 2;
    let mut matrix = DMatrix::zeros(n, n);
    for k in 0..half {
        matrix[(2 * k, k)] = FRAC_1_SQRT_2;
        matrix[(2 * k + 1, k)] = FRAC_1_SQRT_2;
        matrix[(2 * k, half + k)] = FRAC_1_SQRT_2;
        matrix[(2 * k + 1, half + k)] = -FRAC_1_SQRT_2;
    }
    Ok(NonLocalBasis {
        matrix,
        kind: BasisKind::HaarBlock,
    })
}
