//! Seeded speckle / additive Gaussian noise and calibration of the noise
//! level against a target input PSNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::Image;

/// Largest intensity of 8-bit imagery.
pub const MAX_INTENSITY: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    /// `I = S ⊙ N`, `N ~ Normal(1, σ²)` per pixel.
    Speckle,
    /// `I = S + G`, `G ~ Normal(0, σ²)` per pixel, σ in gray levels.
    Gaussian,
}

impl NoiseModel {
    pub fn name(self) -> &'static str {
        match self {
            NoiseModel::Speckle => "speckle",
            NoiseModel::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speckle" => Ok(NoiseModel::Speckle),
            "gaussian" | "additive" | "additive-gaussian" => Ok(NoiseModel::Gaussian),
            other => Err(Error::Parameter(format!("unknown noise model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub sigma: f64,
    pub seed: u64,
    /// Clamp to `[0, 255]` after injection.
    pub clip: bool,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            model: NoiseModel::Gaussian,
            sigma,
            seed,
            clip: true,
        }
    }

    pub fn speckle(sigma: f64, seed: u64) -> Self {
        Self {
            model: NoiseModel::Speckle,
            sigma,
            seed,
            clip: true,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn with_clip(self, clip: bool) -> Self {
        Self { clip, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Mixes a base seed with two stream indices (splitmix64 finalizer).
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f).rotate_left(31);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pure function of `(img, spec)`.
pub fn add_noise(img: &Image, spec: &NoiseSpec) -> Result<Image> {
    spec.validate()?;
    if spec.sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = img.clone();
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = match spec.model {
            NoiseModel::Speckle => *v * (1.0 + spec.sigma * z),
            NoiseModel::Gaussian => *v + spec.sigma * z,
        };
        if spec.clip {
            *v = v.clamp(0.0, MAX_INTENSITY);
        }
    }
    Ok(out)
}

/// Result of [`calibrate_noise`].
#[derive(Debug, Clone)]
pub struct Calibration {
    pub sigma: f64,
    /// Mean noisy-input PSNR at `sigma`.
    pub psnr_db: f64,
    /// Every `(sigma, mean_psnr)` evaluated, in order.
    pub trace: Vec<(f64, f64)>,
}

/// Tolerance on the mean PSNR reached by [`calibrate_noise`].
pub const CALIBRATION_TOL_DB: f64 = 0.05;

fn mean_noisy_psnr(images: &[Image], spec: &NoiseSpec) -> Result<f64> {
    let mut acc = 0.0;
    for (i, img) in images.iter().enumerate() {
        let s = spec.with_seed(derive_seed(spec.seed, i as u64, 0));
        acc += psnr(img, &add_noise(img, &s)?, MAX_INTENSITY)?;
    }
    Ok(acc / images.len() as f64)
}

/// Bisects on σ until the mean noisy-input PSNR over `images` is within
/// [`CALIBRATION_TOL_DB`] of `target_psnr`. `template` fixes the model,
/// seed and clipping; its σ is ignored.
pub fn calibrate_noise(
    images: &[Image],
    target_psnr: f64,
    template: &NoiseSpec,
) -> Result<Calibration> {
    if images.is_empty() {
        return Err(Error::Calibration("no images to calibrate on".into()));
    }
    if !target_psnr.is_finite() {
        return Err(Error::Calibration(format!(
            "target PSNR {target_psnr} is not achievable"
        )));
    }
    let mut hi = match template.model {
        NoiseModel::Gaussian => MAX_INTENSITY,
        NoiseModel::Speckle => 8.0,
    };
    let mut trace = Vec::new();
    let p_hi = mean_noisy_psnr(images, &template.with_sigma(hi))?;
    trace.push((hi, p_hi));
    if p_hi > target_psnr {
        return Err(Error::Calibration(format!(
            "target {target_psnr} dB is below the {p_hi:.3} dB reached at sigma {hi}"
        )));
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = mean_noisy_psnr(images, &template.with_sigma(mid))?;
        trace.push((mid, p));
        if (p - target_psnr).abs() <= CALIBRATION_TOL_DB {
            return Ok(Calibration {
                sigma: mid,
                psnr_db: p,
                trace,
            });
        }
        if p > target_psnr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!(
        "bisection did not bracket {target_psnr} dB"
    )))
}
