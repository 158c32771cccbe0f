//! PSNR and SSIM.

use crate::error::{Error, Result};
use crate::noise::MAX_INTENSITY;
use crate::Image;

pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    reference.check_same_shape(test)?;
    let sum: f64 = reference
        .as_slice()
        .iter()
        .zip(test.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// `20·log10(max_val / √MSE)` in dB. Identical images give `+∞`.
pub fn psnr(reference: &Image, test: &Image, max_val: f64) -> Result<f64> {
    if !(max_val > 0.0) {
        return Err(Error::Parameter(format!(
            "peak value must be positive, got {max_val}"
        )));
    }
    let e = mse(reference, test)?;
    Ok(psnr_from_mse(e, max_val))
}

pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (max_val / mse.sqrt()).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsimMode {
    /// Whole-image statistics with `N - 1` normalization.
    Global,
    /// Mean over all valid placements of a normalized Gaussian window.
    Windowed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub mode: SsimMode,
    pub window: usize,
    pub window_sigma: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: MAX_INTENSITY,
            mode: SsimMode::Windowed,
            window: 11,
            window_sigma: 1.5,
        }
    }
}

impl SsimParams {
    pub fn global() -> Self {
        Self {
            mode: SsimMode::Global,
            ..Self::default()
        }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn window_taps(&self) -> Vec<f64> {
        let r = (self.window as f64 - 1.0) / 2.0;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.window_sigma * self.window_sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }
}

#[inline]
fn ssim_formula(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Structural similarity. Images smaller than the window fall back to
/// global statistics.
pub fn ssim(reference: &Image, test: &Image, params: &SsimParams) -> Result<f64> {
    reference.check_same_shape(test)?;
    if !(params.c1() > 0.0 && params.c2() > 0.0) {
        return Err(Error::Parameter("SSIM constants must be positive".into()));
    }
    let windowed = params.mode == SsimMode::Windowed
        && params.window > 0
        && reference.width() >= params.window
        && reference.height() >= params.window;
    if windowed {
        Ok(ssim_windowed(reference, test, params))
    } else {
        Ok(ssim_global(reference, test, params))
    }
}

fn ssim_global(a: &Image, b: &Image, p: &SsimParams) -> f64 {
    let n = a.len() as f64;
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let mx = xa.iter().sum::<f64>() / n;
    let my = xb.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xa.iter().zip(xb) {
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
        cxy += (x - mx) * (y - my);
    }
    let denom = if n > 1.0 { n - 1.0 } else { 1.0 };
    ssim_formula(mx, my, vx / denom, vy / denom, cxy / denom, p.c1(), p.c2())
}

/// Separable valid-mode filtering of a row-major plane.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                acc += t * rows[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn ssim_windowed(a: &Image, b: &Image, p: &SsimParams) -> f64 {
    let (w, h) = (a.width(), a.height());
    let taps = p.window_taps();
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let prod: Vec<f64> = xa.iter().zip(xb).map(|(x, y)| x * y).collect();
    let mu_x = filter_valid(xa, w, h, &taps);
    let mu_y = filter_valid(xb, w, h, &taps);
    let exx = filter_valid(&sq(xa), w, h, &taps);
    let eyy = filter_valid(&sq(xb), w, h, &taps);
    let exy = filter_valid(&prod, w, h, &taps);
    let (c1, c2) = (p.c1(), p.c2());
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        total += ssim_formula(
            mx,
            my,
            exx[i] - mx * mx,
            eyy[i] - my * my,
            exy[i] - mx * my,
            c1,
            c2,
        );
    }
    total / mu_x.len() as f64
}

/// PSNR, SSIM and MSE of one image pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricResult {
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: f64,
}

pub fn evaluate(reference: &Image, test: &Image, params: &SsimParams) -> Result<MetricResult> {
    let e = mse(reference, test)?;
    Ok(MetricResult {
        psnr_db: psnr_from_mse(e, params.dynamic_range),
        ssim: ssim(reference, test, params)?,
        mse: e,
    })
}
