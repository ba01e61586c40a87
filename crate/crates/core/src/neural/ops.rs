//! Forward and backward kernels. Every reduction accumulates in `f64` in a
//! fixed order per output element, so results do not depend on the thread
//! count.

use std::ops::Range;

use rayon::prelude::*;

use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};

/// Output length and leading pad for "same" zero padding:
/// `out = ceil(in / stride)`, with any odd padding going to the trailing side.
pub fn same_padding(len: usize, kernel: usize, stride: usize, dilation: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let span = (kernel - 1) * dilation + 1;
    let total = ((out - 1) * stride + span).saturating_sub(len);
    (out, total / 2)
}

/// Output positions `o` for which `o * stride + offset - pad` lands inside
/// `[0, len)`.
fn valid_outputs(out_len: usize, len: usize, offset: usize, pad: usize, stride: usize) -> Range<usize> {
    let off = offset as isize - pad as isize;
    let s = stride as isize;
    let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
    let last = len as isize - 1 - off;
    if last < 0 {
        return 0..0;
    }
    let hi = (last / s + 1).min(out_len as isize);
    (lo as usize)..(hi.max(lo) as usize)
}

fn check_conv<T: Real>(x: &Tensor4<T>, w: &Tensor4<T>, stride: usize, dilation: usize) -> Result<()> {
    if x.channels() != w.channels() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            w.channels(),
            x.channels()
        )));
    }
    if stride == 0 || dilation == 0 || w.height() == 0 || w.width() == 0 {
        return Err(Error::InvalidParam(format!(
            "conv needs positive kernel, stride and dilation (k={}x{}, s={stride}, d={dilation})",
            w.height(),
            w.width()
        )));
    }
    if x.height() == 0 || x.width() == 0 {
        return Err(Error::Shape("conv input has zero spatial size".into()));
    }
    Ok(())
}

/// 2-D cross-correlation with dilation, stride and "same" zero padding.
/// `weight` is laid out `[out, in, kh, kw]`.
pub fn conv2d<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: &[T],
    stride: usize,
    dilation: usize,
) -> Result<Tensor4<T>> {
    check_conv(x, weight, stride, dilation)?;
    let [n, cin, h, w] = x.dims();
    let [cout, _, kh, kw] = weight.dims();
    if bias.len() != cout {
        return Err(Error::Shape(format!("conv bias has {} entries, expected {cout}", bias.len())));
    }
    let (oh, pt) = same_padding(h, kh, stride, dilation);
    let (ow, pl) = same_padding(w, kw, stride, dilation);

    let mut out = vec![T::zero(); n * cout * oh * ow];
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(plane, dst)| {
        let (b, co) = (plane / cout, plane % cout);
        let mut acc = vec![0.0f64; oh * ow];
        for ci in 0..cin {
            let src = x.plane(b, ci);
            for ky in 0..kh {
                let ys = valid_outputs(oh, h, ky * dilation, pt, stride);
                for kx in 0..kw {
                    let wv = weight.at(co, ci, ky, kx).widen();
                    let xs = valid_outputs(ow, w, kx * dilation, pl, stride);
                    for oy in ys.clone() {
                        let iy = oy * stride + ky * dilation - pt;
                        let row = &src[iy * w..(iy + 1) * w];
                        let arow = &mut acc[oy * ow..(oy + 1) * ow];
                        for ox in xs.clone() {
                            arow[ox] += wv * row[ox * stride + kx * dilation - pl].widen();
                        }
                    }
                }
            }
        }
        let bv = bias[co].widen();
        for (d, a) in dst.iter_mut().zip(&acc) {
            *d = T::cast(a + bv);
        }
    });
    Tensor4::from_vec([n, cout, oh, ow], out)
}

/// Gradients of [`conv2d`] with respect to its input, weight and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    stride: usize,
    dilation: usize,
) -> Result<ConvGrads<T>> {
    check_conv(x, weight, stride, dilation)?;
    let [n, cin, h, w] = x.dims();
    let [cout, _, kh, kw] = weight.dims();
    let (oh, pt) = same_padding(h, kh, stride, dilation);
    let (ow, pl) = same_padding(w, kw, stride, dilation);
    if grad_out.dims() != [n, cout, oh, ow] {
        return Err(Error::Shape(format!(
            "conv output gradient is {:?}, expected {:?}",
            grad_out.dims(),
            [n, cout, oh, ow]
        )));
    }

    let mut gx = vec![T::zero(); n * cin * h * w];
    gx.par_chunks_mut(h * w).enumerate().for_each(|(plane, dst)| {
        let (b, ci) = (plane / cin, plane % cin);
        let mut acc = vec![0.0f64; h * w];
        for co in 0..cout {
            let gy = grad_out.plane(b, co);
            for ky in 0..kh {
                let ys = valid_outputs(oh, h, ky * dilation, pt, stride);
                for kx in 0..kw {
                    let wv = weight.at(co, ci, ky, kx).widen();
                    let xs = valid_outputs(ow, w, kx * dilation, pl, stride);
                    for oy in ys.clone() {
                        let iy = oy * stride + ky * dilation - pt;
                        for ox in xs.clone() {
                            let ix = ox * stride + kx * dilation - pl;
                            acc[iy * w + ix] += wv * gy[oy * ow + ox].widen();
                        }
                    }
                }
            }
        }
        for (d, a) in dst.iter_mut().zip(&acc) {
            *d = T::cast(*a);
        }
    });

    let per_out = cin * kh * kw;
    let mut gw = vec![T::zero(); cout * per_out];
    let gb: Vec<T> = gw
        .par_chunks_mut(per_out)
        .enumerate()
        .map(|(co, dst)| {
            let mut acc = vec![0.0f64; per_out];
            let mut bias_acc = 0.0f64;
            for b in 0..n {
                let gy = grad_out.plane(b, co);
                bias_acc += gy.iter().map(|v| v.widen()).sum::<f64>();
                for ci in 0..cin {
                    let src = x.plane(b, ci);
                    for ky in 0..kh {
                        let ys = valid_outputs(oh, h, ky * dilation, pt, stride);
                        for kx in 0..kw {
                            let xs = valid_outputs(ow, w, kx * dilation, pl, stride);
                            let mut s = 0.0f64;
                            for oy in ys.clone() {
                                let iy = oy * stride + ky * dilation - pt;
                                for ox in xs.clone() {
                                    let ix = ox * stride + kx * dilation - pl;
                                    s += gy[oy * ow + ox].widen() * src[iy * w + ix].widen();
                                }
                            }
                            acc[(ci * kh + ky) * kw + kx] += s;
                        }
                    }
                }
            }
            for (d, a) in dst.iter_mut().zip(&acc) {
                *d = T::cast(*a);
            }
            T::cast(bias_acc)
        })
        .collect();

    Ok(ConvGrads {
        input: Tensor4::from_vec([n, cin, h, w], gx)?,
        weight: Tensor4::from_vec(weight.dims(), gw)?,
        bias: gb,
    })
}

/// Exponential linear unit with `alpha = 1`.
pub fn elu<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { v.exp_m1() })
}

pub fn elu_backward<T: Real>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { g * v.exp() })
        .collect();
    Tensor4::from_vec(x.dims(), data).expect("same dims")
}

pub fn tanh<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| v.tanh())
}

/// Backward of tanh, written in terms of the forward output `y`.
pub fn tanh_backward<T: Real>(y: &Tensor4<T>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| g * (T::one() - v * v))
        .collect();
    Tensor4::from_vec(y.dims(), data).expect("same dims")
}

/// Nearest-neighbour ×2 upsampling.
pub fn upsample2<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = x.dims();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            for y in 0..oh {
                let row = &src[(y / 2) * w..(y / 2 + 1) * w];
                out.extend((0..ow).map(|xx| row[xx / 2]));
            }
        }
    }
    Tensor4::from_vec([n, c, oh, ow], out).expect("sized above")
}

pub fn upsample2_backward<T: Real>(grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, oh, ow] = grad_out.dims();
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(Error::Shape(format!("upsample gradient has odd size {oh}x{ow}")));
    }
    let (h, w) = (oh / 2, ow / 2);
    let mut out = Vec::with_capacity(n * c * h * w);
    for b in 0..n {
        for ch in 0..c {
            let g = grad_out.plane(b, ch);
            for y in 0..h {
                for x in 0..w {
                    let s = g[2 * y * ow + 2 * x].widen()
                        + g[2 * y * ow + 2 * x + 1].widen()
                        + g[(2 * y + 1) * ow + 2 * x].widen()
                        + g[(2 * y + 1) * ow + 2 * x + 1].widen();
                    out.push(T::cast(s));
                }
            }
        }
    }
    Tensor4::from_vec([n, c, h, w], out)
}
