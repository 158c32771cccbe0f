//! Kernels shared by the forward pass and the tape's backward pass.

use crate::bank::FilterBank2D;
use crate::error::{Error, Result};

use super::tensor::{matmul, Scalar, Tensor};

/// Lays out the `k x k` zero-padded neighbourhoods of every pixel as columns:
/// the result is `(c·k·k) x (h·w)`, row index `(ci·k + u)·k + v`.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut cols = vec![T::ZERO; c * k * k * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for u in 0..k {
            for v in 0..k {
                let row = (ci * k + u) * k + v;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dy = u as isize - pad;
                let dx = v as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst_row = &mut dst[y * w..(y + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xx in x0..x1 {
                        dst_row[xx] = src_row[(xx as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut x = vec![T::ZERO; c * hw];
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for u in 0..k {
            for v in 0..k {
                let row = (ci * k + u) * k + v;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = u as isize - pad;
                let dx = v as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &src[y * w..(y + 1) * w];
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xx in x0..x1 {
                        dst_row[(xx as isize + dx) as usize] += src_row[xx];
                    }
                }
            }
        }
    }
    x
}

fn conv_dims<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (c, h, w) = x.chw()?;
    match weight.dims()[..] {
        [out, cin, k, k2] if cin == c && k == k2 && k % 2 == 1 => Ok((c, h, w, out, k)),
        _ => Err(Error::Shape(format!(
            "weight {:?} incompatible with {c}-channel input",
            weight.dims()
        ))),
    }
}

/// Same-size (zero padded) stride-1 convolution without bias.
/// Weight dims: `[out, in, k, k]` with odd `k`.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w, out, k) = conv_dims(x, weight)?;
    let hw = h * w;
    let mut y = vec![T::ZERO; out * hw];
    if k == 1 {
        matmul(
            out,
            c,
            hw,
            weight.data(),
            false,
            x.data(),
            false,
            &mut y,
            false,
        );
    } else {
        let cols = im2col(x.data(), c, h, w, k);
        matmul(
            out,
            c * k * k,
            hw,
            weight.data(),
            false,
            &cols,
            false,
            &mut y,
            false,
        );
    }
    Tensor::map(out, h, w, y)
}

/// Returns `(grad_input, grad_weight)` for [`conv2d`].
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c, h, w, out, k) = conv_dims(x, weight)?;
    let hw = h * w;
    let ckk = c * k * k;
    let mut gw = vec![T::ZERO; out * ckk];
    let gx = if k == 1 {
        matmul(
            out,
            hw,
            c,
            grad_out.data(),
            false,
            x.data(),
            true,
            &mut gw,
            false,
        );
        let mut gx = vec![T::ZERO; c * hw];
        matmul(
            c,
            out,
            hw,
            weight.data(),
            true,
            grad_out.data(),
            false,
            &mut gx,
            false,
        );
        gx
    } else {
        let cols = im2col(x.data(), c, h, w, k);
        matmul(
            out,
            hw,
            ckk,
            grad_out.data(),
            false,
            &cols,
            true,
            &mut gw,
            false,
        );
        let mut gcols = vec![T::ZERO; ckk * hw];
        matmul(
            ckk,
            out,
            hw,
            weight.data(),
            true,
            grad_out.data(),
            false,
            &mut gcols,
            false,
        );
        col2im(&gcols, c, h, w, k)
    };
    Ok((
        Tensor::map(c, h, w, gx)?,
        Tensor::new(weight.dims().to_vec(), gw)?,
    ))
}

pub fn bias_add<T: Scalar>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw()?;
    if bias.len() != c {
        return Err(Error::Shape(format!(
            "bias of length {} for {c} channels",
            bias.len()
        )));
    }
    let hw = h * w;
    let mut y = x.data().to_vec();
    for (ci, &b) in bias.data().iter().enumerate() {
        y[ci * hw..(ci + 1) * hw].iter_mut().for_each(|v| *v += b);
    }
    Tensor::map(c, h, w, y)
}

pub fn bias_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = grad_out.chw()?;
    let hw = h * w;
    let sums = (0..c)
        .map(|ci| {
            let mut acc = T::ZERO;
            for &g in &grad_out.data()[ci * hw..(ci + 1) * hw] {
                acc += g;
            }
            acc
        })
        .collect();
    Tensor::new(vec![c], sums)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::ZERO { v } else { T::ZERO })
        .collect();
    Tensor::new(x.dims().to_vec(), data).expect("same dims")
}

/// ReLU subgradient at zero is zero.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::new(x.dims().to_vec(), data).expect("same dims")
}

/// Wavelet analysis of every channel into all four subbands.
///
/// Output has `4C` channels ordered subband-major: `[LL(0..C), LH(0..C),
/// HL(0..C), HH(0..C)]`, each `H/s x W/s`.
pub fn wavelet_analysis<T: Scalar>(x: &Tensor<T>, bank: &FilterBank2D) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw()?;
    let s = bank.stride();
    let len = bank.length();
    if h % s != 0 || w % s != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} map not divisible by wavelet stride {s}"
        )));
    }
    let (oh, ow) = (h / s, w / s);
    let filters: Vec<Vec<T>> = bank
        .subbands()
        .iter()
        .map(|f| f.iter().map(|&v| T::from_f64(v)).collect())
        .collect();
    let mut out = vec![T::ZERO; 4 * c * oh * ow];
    let src = x.data();
    for (b, filt) in filters.iter().enumerate() {
        for ci in 0..c {
            let plane = &src[ci * h * w..(ci + 1) * h * w];
            let dst = &mut out[(b * c + ci) * oh * ow..(b * c + ci + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = T::ZERO;
                    for u in 0..len {
                        let row = &plane[(i * s + u) * w + j * s..];
                        for v in 0..len {
                            acc += filt[u * len + v] * row[v];
                        }
                    }
                    dst[i * ow + j] = acc;
                }
            }
        }
    }
    Tensor::map(4 * c, oh, ow, out)
}

/// Transposed strided convolution with the same filters; the exact adjoint
/// of [`wavelet_analysis`]. Input has `4C` channels in subband-major order.
pub fn wavelet_synthesis<T: Scalar>(y: &Tensor<T>, bank: &FilterBank2D) -> Result<Tensor<T>> {
    let (c4, oh, ow) = y.chw()?;
    if c4 % 4 != 0 {
        return Err(Error::Shape(format!(
            "synthesis needs a multiple of 4 channels, got {c4}"
        )));
    }
    let c = c4 / 4;
    let s = bank.stride();
    let len = bank.length();
    let (h, w) = (oh * s, ow * s);
    let filters: Vec<Vec<T>> = bank
        .subbands()
        .iter()
        .map(|f| f.iter().map(|&v| T::from_f64(v)).collect())
        .collect();
    let mut out = vec![T::ZERO; c * h * w];
    let src = y.data();
    for (b, filt) in filters.iter().enumerate() {
        for ci in 0..c {
            let coeffs = &src[(b * c + ci) * oh * ow..(b * c + ci + 1) * oh * ow];
            let plane = &mut out[ci * h * w..(ci + 1) * h * w];
            for i in 0..oh {
                for j in 0..ow {
                    let a = coeffs[i * ow + j];
                    for u in 0..len {
                        let row = &mut plane[(i * s + u) * w + j * s..];
                        for v in 0..len {
                            row[v] += filt[u * len + v] * a;
                        }
                    }
                }
            }
        }
    }
    Tensor::map(c, h, w, out)
}

/// Channel-wise concatenation of two maps with equal spatial size.
pub fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ca, h, w) = a.chw()?;
    let (cb, hb, wb) = b.chw()?;
    if (h, w) != (hb, wb) {
        return Err(Error::Shape(format!(
            "cannot concatenate {h}x{w} with {hb}x{wb}"
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::map(ca + cb, h, w, data)
}

/// Channels `start..start + count`.
pub fn slice_channels<T: Scalar>(x: &Tensor<T>, start: usize, count: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw()?;
    if start + count > c {
        return Err(Error::Shape(format!(
            "channel slice {start}..{} of {c}",
            start + count
        )));
    }
    let hw = h * w;
    Tensor::map(
        count,
        h,
        w,
        x.data()[start * hw..(start + count) * hw].to_vec(),
    )
}
