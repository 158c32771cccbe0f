//! Deep convolutional framelet denoising with mixed Haar / Daubechies-4
//! wavelet pooling.
//!
//! The crate is organized bottom-up:
//!
//! - [`bank`]: fixed filter banks (Haar, D4, DCT) and their separable 2-D form.
//! - [`hankel`]: circular Hankel lifting, its SVD, framelet coefficients and
//!   the framelet expansion.
//! - [`network`]: the wavelet encoder-decoder, a small reverse-mode tape and
//!   the binary model container.
//! - [`train`]: Adam, the halving learning-rate schedule, MSE and the
//!   patch-based training loop.
//! - [`noise`] and [`metrics`]: speckle / Gaussian injection, PSNR and SSIM.
//! - [`dataset`], [`config`], [`report`] and [`cli`]: the evaluation harness.
//!
//! Runnable walkthroughs for each capability live under `examples/`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bank;
pub mod cli;
pub mod config;
pub mod dataset;
mod error;
pub mod hankel;
mod image;
pub mod metrics;
pub mod network;
pub mod noise;
pub mod report;
pub mod synth;
pub mod train;

pub use crate::error::{Error, Result};
pub use crate::image::Image;

/// Version string embedded in every report file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
