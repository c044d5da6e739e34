//! Same-padded 2-d cross-correlation, forward and backward.
//!
//! The kernel is lowered to a matrix product over an im2col buffer. Padding
//! follows the "same" convention: the stride-`s` output is `ceil(in / s)`
//! rows/columns, zero padding is split symmetrically with the extra
//! row/column on the bottom/right.

use super::linalg::{matmul_acc, transpose};
use super::{Result, Scalar, Tensor, TensorError};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub padded_h: usize,
    pub padded_w: usize,
}

/// Same-padding output extent: `ceil(len / stride)`.
pub(crate) fn same_output_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

fn padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = same_output_len(len, stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(len);
    let before = total / 2;
    (before, total - before)
}

pub(crate) fn geometry(
    input: &[usize],
    kernels: &[usize],
    stride: usize,
) -> Result<ConvGeometry> {
    let &[in_ch, in_h, in_w] = input else {
        return Err(TensorError::Shape(format!(
            "conv2d input must be [C,H,W], got {:?}",
            input
        )));
    };
    let &[out_ch, k_in, kh, kw] = kernels else {
        return Err(TensorError::Shape(format!(
            "conv2d kernels must be [C_out,C_in,k,k], got {:?}",
            kernels
        )));
    };
    if kh != kw {
        return Err(TensorError::Shape(format!(
            "conv2d kernels must be square, got {}x{}",
            kh, kw
        )));
    }
    if kh % 2 == 0 {
        return Err(TensorError::Shape(format!(
            "conv2d kernel size must be odd, got {}",
            kh
        )));
    }
    if k_in != in_ch {
        return Err(TensorError::Shape(format!(
            "conv2d channel mismatch: input depth {}, kernel expects {}",
            in_ch, k_in
        )));
    }
    if stride == 0 {
        return Err(TensorError::Contract("conv2d stride must be positive".into()));
    }
    if in_h == 0 || in_w == 0 {
        return Err(TensorError::Shape(
            "conv2d input spatial dims must be >= 1".into(),
        ));
    }
    let (pad_top, pad_bottom) = padding(in_h, kh, stride);
    let (pad_left, pad_right) = padding(in_w, kw, stride);
    Ok(ConvGeometry {
        in_ch,
        in_h,
        in_w,
        out_ch,
        kernel: kh,
        stride,
        out_h: same_output_len(in_h, stride),
        out_w: same_output_len(in_w, stride),
        pad_top,
        pad_left,
        padded_h: in_h + pad_top + pad_bottom,
        padded_w: in_w + pad_left + pad_right,
    })
}

fn pad_input<T: Scalar>(input: &[T], g: &ConvGeometry) -> Vec<T> {
    let mut padded = vec![T::zero(); g.in_ch * g.padded_h * g.padded_w];
    for c in 0..g.in_ch {
        for y in 0..g.in_h {
            let src = &input[(c * g.in_h + y) * g.in_w..][..g.in_w];
            let base = (c * g.padded_h + y + g.pad_top) * g.padded_w + g.pad_left;
            padded[base..base + g.in_w].copy_from_slice(src);
        }
    }
    padded
}

/// Lower the padded input into a `[C_in*k*k, out_h*out_w]` patch matrix.
fn im2col<T: Scalar>(padded: &[T], g: &ConvGeometry) -> Vec<T> {
    let k = g.kernel;
    let cols = g.out_h * g.out_w;
    let mut out = vec![T::zero(); g.in_ch * k * k * cols];
    out.par_chunks_mut(k * k * cols)
        .enumerate()
        .for_each(|(c, chunk)| {
            let plane = &padded[c * g.padded_h * g.padded_w..][..g.padded_h * g.padded_w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut chunk[(ky * k + kx) * cols..][..cols];
                    for oy in 0..g.out_h {
                        let src_y = oy * g.stride + ky;
                        let src = &plane[src_y * g.padded_w + kx..];
                        let dst = &mut row[oy * g.out_w..][..g.out_w];
                        if g.stride == 1 {
                            dst.copy_from_slice(&src[..g.out_w]);
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = src[ox * g.stride];
                            }
                        }
                    }
                }
            }
        });
    out
}

/// Scatter-add a `[C_in*k*k, out_h*out_w]` gradient back onto the padded
/// input layout.
fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let k = g.kernel;
    let n = g.out_h * g.out_w;
    let mut padded = vec![T::zero(); g.in_ch * g.padded_h * g.padded_w];
    padded
        .par_chunks_mut(g.padded_h * g.padded_w)
        .enumerate()
        .for_each(|(c, plane)| {
            let chunk = &cols[c * k * k * n..][..k * k * n];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &chunk[(ky * k + kx) * n..][..n];
                    for oy in 0..g.out_h {
                        let dst_y = oy * g.stride + ky;
                        let dst = &mut plane[dst_y * g.padded_w + kx..];
                        let src = &row[oy * g.out_w..][..g.out_w];
                        for (ox, s) in src.iter().enumerate() {
                            let d = &mut dst[ox * g.stride];
                            *d = *d + *s;
                        }
                    }
                }
            }
        });
    padded
}

fn unpad<T: Scalar>(padded: &[T], g: &ConvGeometry) -> Vec<T> {
    let mut out = vec![T::zero(); g.in_ch * g.in_h * g.in_w];
    for c in 0..g.in_ch {
        for y in 0..g.in_h {
            let src = (c * g.padded_h + y + g.pad_top) * g.padded_w + g.pad_left;
            let dst = (c * g.in_h + y) * g.in_w;
            out[dst..dst + g.in_w].copy_from_slice(&padded[src..src + g.in_w]);
        }
    }
    out
}

pub(crate) fn forward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = geometry(input.shape(), kernels.shape(), stride)?;
    if bias.shape() != [g.out_ch] {
        return Err(TensorError::Shape(format!(
            "conv2d bias must be [{}], got {:?}",
            g.out_ch,
            bias.shape()
        )));
    }
    let padded = pad_input(input.data(), &g);
    let cols = im2col(&padded, &g);
    let n = g.out_h * g.out_w;
    let k2 = g.in_ch * g.kernel * g.kernel;
    let mut out = vec![T::zero(); g.out_ch * n];
    for (oc, row) in out.chunks_mut(n).enumerate() {
        row.iter_mut().for_each(|v| *v = bias.data()[oc]);
    }
    matmul_acc(kernels.data(), &cols, &mut out, g.out_ch, k2, n);
    Tensor::new(vec![g.out_ch, g.out_h, g.out_w], out)
}

pub(crate) type ConvGrads<T> = (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>);

/// Gradients for (input, kernels, bias); each side is computed only when
/// requested.
pub(crate) fn backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    grad_out: &[T],
    need_input: bool,
    need_kernels: bool,
    need_bias: bool,
) -> Result<ConvGrads<T>> {
    let g = geometry(input.shape(), kernels.shape(), stride)?;
    let n = g.out_h * g.out_w;
    let k2 = g.in_ch * g.kernel * g.kernel;
    debug_assert_eq!(grad_out.len(), g.out_ch * n);

    let grad_bias = need_bias.then(|| {
        grad_out
            .chunks(n)
            .map(|row| row.iter().fold(T::zero(), |acc, v| acc + *v))
            .collect::<Vec<T>>()
    });

    let grad_kernels = if need_kernels {
        let padded = pad_input(input.data(), &g);
        let cols = im2col(&padded, &g);
        let cols_t = transpose(&cols, k2, n);
        let mut grad_k = vec![T::zero(); g.out_ch * k2];
        matmul_acc(grad_out, &cols_t, &mut grad_k, g.out_ch, n, k2);
        Some(grad_k)
    } else {
        None
    };

    let grad_input = if need_input {
        let kernels_t = transpose(kernels.data(), g.out_ch, k2);
        let mut grad_cols = vec![T::zero(); k2 * n];
        matmul_acc(&kernels_t, grad_out, &mut grad_cols, k2, g.out_ch, n);
        let padded_grad = col2im_add(&grad_cols, &g);
        Some(unpad(&padded_grad, &g))
    } else {
        None
    };

    Ok((grad_input, grad_kernels, grad_bias))
}
