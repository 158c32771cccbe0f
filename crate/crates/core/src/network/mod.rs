//! Mixed-wavelet encoder-decoder network.

mod graph;
mod io;
mod model;
pub mod ops;
mod tensor;

pub use graph::{NodeId, ValueGraph};
pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    build_network, image_to_tensor, tensor_to_image, GradTable, Network, NetworkStage, Param,
    StageConfig, CONV_KERNEL, DEFAULT_BASE_CHANNELS, INTENSITY_SCALE,
};
pub use tensor::{Scalar, Tensor};

use crate::bank::FilterBank2D;
use crate::error::{Error, Result};

/// Splits a `C x H x W` map into the LL band (`C` channels) and the stacked
/// LH/HL/HH bands (`3C` channels), each decimated by the bank's stride.
pub fn pool_wavelet<T: Scalar>(
    feat: &Tensor<T>,
    bank: &FilterBank2D,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = feat.chw()?.0;
    let bands = ops::wavelet_analysis(feat, bank)?;
    Ok((
        ops::slice_channels(&bands, 0, c)?,
        ops::slice_channels(&bands, c, 3 * c)?,
    ))
}

/// Adjoint of [`pool_wavelet`]; the exact inverse for Haar.
pub fn unpool_wavelet<T: Scalar>(
    low: &Tensor<T>,
    highs: &Tensor<T>,
    bank: &FilterBank2D,
) -> Result<Tensor<T>> {
    let (c, h, w) = low.chw()?;
    if highs.chw()? != (3 * c, h, w) {
        return Err(Error::Shape(format!(
            "high bands {:?} do not match low band {:?}",
            highs.dims(),
            low.dims()
        )));
    }
    ops::wavelet_synthesis(&ops::concat(low, highs)?, bank)
}
