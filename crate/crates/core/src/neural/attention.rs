//! Contextual attention: every foreground location borrows features from
//! fully known background patches, weighted by a softmax over cosine
//! similarity.

use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};
use crate::raster::VoidMask;

/// Norm floor used when normalising patches.
pub const NORM_EPS: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Attention<T> {
    pub output: Tensor4<T>,
    /// Centres of the background patches, row-major.
    pub sources: Vec<(usize, usize)>,
    /// Row-major `[H·W][sources]` attention weights.
    pub weights: Vec<f64>,
}

impl<T> Attention<T> {
    /// Attention weights of the foreground location `(y, x)`.
    pub fn weights_at(&self, y: usize, x: usize, width: usize) -> &[f64] {
        let n = self.sources.len();
        let p = y * width + x;
        &self.weights[p * n..(p + 1) * n]
    }
}

/// Reduces a pixel mask to an `fh × fw` feature grid. A feature cell is
/// unknown if any pixel of the block it covers is unknown.
pub fn downsample_mask(mask: &VoidMask, fh: usize, fw: usize) -> VoidMask {
    let (h, w) = mask.shape();
    VoidMask::from_fn(fh, fw, |fy, fx| {
        let (y0, y1) = (fy * h / fh, ((fy + 1) * h).div_ceil(fh));
        let (x0, x1) = (fx * w / fw, ((fx + 1) * w).div_ceil(fw));
        (y0..y1.min(h)).any(|y| (x0..x1.min(w)).any(|x| mask.is_unknown(y, x)))
    })
}

fn gather<T: Real>(t: &Tensor4<T>, y: usize, x: usize, half: usize, dst: &mut [f64]) {
    let [_, c, h, w] = t.dims();
    let p = 2 * half + 1;
    let mut k = 0;
    for ch in 0..c {
        let plane = t.plane(0, ch);
        for dy in 0..p {
            for dx in 0..p {
                let (yy, xx) = ((y + dy) as isize - half as isize, (x + dx) as isize - half as isize);
                dst[k] = if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                    plane[yy as usize * w + xx as usize].widen()
                } else {
                    0.0
                };
                k += 1;
            }
        }
    }
}

/// Runs contextual attention of `fg` over the known patches of `bg`.
/// `mask` is at feature resolution.
pub fn contextual_attention<T: Real>(
    fg: &Tensor4<T>,
    bg: &Tensor4<T>,
    mask: &VoidMask,
    lambda: f64,
    patch: usize,
) -> Result<Attention<T>> {
    let [n, c, h, w] = fg.dims();
    if bg.dims() != fg.dims() || n != 1 {
        return Err(Error::Shape(format!(
            "attention needs equal single-batch fg and bg, got {:?} and {:?}",
            fg.dims(),
            bg.dims()
        )));
    }
    if mask.shape() != (h, w) {
        return Err(Error::Shape(format!("attention mask is {:?}, features are {h}x{w}", mask.shape())));
    }
    if patch.is_multiple_of(2) || !(lambda > 0.0) {
        return Err(Error::InvalidParam(format!("attention needs odd patch and lambda > 0, got {patch}, {lambda}")));
    }
    let half = patch / 2;
    let len = c * patch * patch;

    let mut sources = Vec::new();
    if h >= patch && w >= patch {
        for y in half..h - half {
            for x in half..w - half {
                if (y - half..=y + half).all(|yy| (x - half..=x + half).all(|xx| mask.is_known(yy, xx))) {
                    sources.push((y, x));
                }
            }
        }
    }
    if sources.is_empty() {
        return Err(Error::AttentionSourceEmpty);
    }
    let ns = sources.len();

    let mut raw = vec![0.0; ns * len];
    let mut unit = vec![0.0; ns * len];
    for (q, &(y, x)) in sources.iter().enumerate() {
        let b = &mut raw[q * len..(q + 1) * len];
        gather(bg, y, x, half, b);
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
        for (u, v) in unit[q * len..(q + 1) * len].iter_mut().zip(b.iter()) {
            *u = v / norm;
        }
    }

    let mut weights = vec![0.0; h * w * ns];
    let mut acc = vec![0.0; c * h * w];
    let mut count = vec![0u32; h * w];
    let mut f = vec![0.0; len];
    let mut placed = vec![0.0; len];
    for y in 0..h {
        for x in 0..w {
            gather(fg, y, x, half, &mut f);
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
            let a = &mut weights[(y * w + x) * ns..(y * w + x + 1) * ns];
            for (q, s) in a.iter_mut().enumerate() {
                let dot: f64 = f.iter().zip(&unit[q * len..(q + 1) * len]).map(|(u, v)| u * v).sum();
                *s = lambda * dot / norm;
            }
            let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in a.iter_mut() {
                *s = (*s - max).exp();
                z += *s;
            }
            placed.iter_mut().for_each(|v| *v = 0.0);
            for (q, s) in a.iter_mut().enumerate() {
                *s /= z;
                for (pv, bv) in placed.iter_mut().zip(&raw[q * len..(q + 1) * len]) {
                    *pv += *s * bv;
                }
            }
            // transposed placement of the blended patch centred at (y, x)
            for dy in 0..patch {
                let yy = (y + dy) as isize - half as isize;
                if yy < 0 || yy as usize >= h {
                    continue;
                }
                for dx in 0..patch {
                    let xx = (x + dx) as isize - half as isize;
                    if xx < 0 || xx as usize >= w {
                        continue;
                    }
                    let pix = yy as usize * w + xx as usize;
                    count[pix] += 1;
                    for ch in 0..c {
                        acc[ch * h * w + pix] += placed[(ch * patch + dy) * patch + dx];
                    }
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, v)| T::cast(v / count[i % (h * w)] as f64))
        .collect();
    Ok(Attention {
        output: Tensor4::from_vec([1, c, h, w], data)?,
        sources,
        weights,
    })
}
