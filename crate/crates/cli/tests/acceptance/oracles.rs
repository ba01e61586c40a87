//! Independent reference implementations. Each one is written for clarity
//! rather than speed and shares no code with the library it checks.

use demfill_core::neural::{Op, Sequential, Tensor4};
use demfill_core::{DemGrid, VoidMask};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Per-pixel minimum L1 distance to any known pixel; 0 on known pixels.
pub fn ring_labels(mask: &VoidMask) -> Vec<u32> {
    let (rows, cols) = mask.shape();
    let mut out = vec![0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            if mask.is_known(i, j) {
                continue;
            }
            let mut best = u32::MAX;
            for a in 0..rows {
                for b in 0..cols {
                    if mask.is_known(a, b) {
                        best = best.min((i.abs_diff(a) + j.abs_diff(b)) as u32);
                    }
                }
            }
            out[i * cols + j] = best;
        }
    }
    out
}

/// Shepard interpolation followed by masked 3×3 mean passes, written as the
/// plain formula: `Σ w z / Σ w` over known pixels within `radius`, or the
/// nearest known pixel (first in row-major order on ties) if none.
pub fn shepard(grid: &DemGrid, mask: &VoidMask, power: f64, radius: f64, passes: usize) -> Vec<f64> {
    let (rows, cols) = grid.shape();
    let mut out = grid.values().to_vec();
    for p in 0..rows * cols {
        if !mask.bits()[p] {
            continue;
        }
        let (pi, pj) = ((p / cols) as f64, (p % cols) as f64);
        let (mut num, mut den) = (0.0, 0.0);
        let mut nearest = (f64::INFINITY, 0.0);
        for q in 0..rows * cols {
            if mask.bits()[q] {
                continue;
            }
            let d = ((q / cols) as f64 - pi).hypot((q % cols) as f64 - pj);
            if d < nearest.0 {
                nearest = (d, grid.values()[q]);
            }
            if d <= radius {
                let w = d.powf(-power);
                num += w * grid.values()[q];
                den += w;
            }
        }
        out[p] = if den > 0.0 { num / den } else { nearest.1 };
    }
    for _ in 0..passes {
        let prev = out.clone();
        for p in 0..rows * cols {
            if !mask.bits()[p] {
                continue;
            }
            let (pi, pj) = ((p / cols) as i64, (p % cols) as i64);
            let mut vals = Vec::new();
            for i in pi - 1..=pi + 1 {
                for j in pj - 1..=pj + 1 {
                    if i >= 0 && j >= 0 && i < rows as i64 && j < cols as i64 {
                        vals.push(prev[i as usize * cols + j as usize]);
                    }
                }
            }
            out[p] = vals.iter().sum::<f64>() / vals.len() as f64;
        }
    }
    out
}

/// Clamped cubic knot vector on `[0, len-1]` with interior knots evenly
/// spaced at most `spacing` apart.
pub fn clamped_knots(len: usize, spacing: usize) -> Vec<f64> {
    let end = (len - 1) as f64;
    let n = ((end / spacing as f64).ceil() as usize).max(1);
    let mut t = vec![0.0; 3];
    t.extend((0..=n).map(|k| end * k as f64 / n as f64));
    t.extend([end; 3]);
    t
}

/// Cox–de Boor recursion for basis `k` of degree `p`. The last non-empty
/// span is closed on the right so the basis sums to one at the far end.
pub fn bspline(t: &[f64], k: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        let end = *t.last().unwrap();
        let last_span = t[k] < t[k + 1] && t[k + 1] == end;
        return if (t[k] <= x && x < t[k + 1]) || (last_span && x == end) { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    if t[k + p] > t[k] {
        v += (x - t[k]) / (t[k + p] - t[k]) * bspline(t, k, p - 1, x);
    }
    if t[k + p + 1] > t[k + 1] {
        v += (t[k + p + 1] - x) / (t[k + p + 1] - t[k + 1]) * bspline(t, k + 1, p - 1, x);
    }
    v
}

/// Unsmoothed least-squares bicubic spline fit by a dense SVD solve,
/// evaluated everywhere.
pub fn spline_dense_fit(grid: &DemGrid, mask: &VoidMask, spacing: usize) -> Vec<f64> {
    let (rows, cols) = grid.shape();
    let (ti, tj) = (clamped_knots(rows, spacing), clamped_knots(cols, spacing));
    let (ni, nj) = (ti.len() - 4, tj.len() - 4);
    let row_of = |i: usize, j: usize| -> Vec<f64> {
        let mut r = vec![0.0; ni * nj];
        for a in 0..ni {
            let ba = bspline(&ti, a, 3, i as f64);
            for b in 0..nj {
                r[a * nj + b] = ba * bspline(&tj, b, 3, j as f64);
            }
        }
        r
    };
    let known: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .filter(|&(i, j)| mask.is_known(i, j))
        .collect();
    let mut a = DMatrix::zeros(known.len(), ni * nj);
    let mut y = DVector::zeros(known.len());
    for (r, &(i, j)) in known.iter().enumerate() {
        for (c, v) in row_of(i, j).into_iter().enumerate() {
            a[(r, c)] = v;
        }
        y[r] = grid.get(i, j);
    }
    let coef = a.svd(true, true).solve(&y, 1e-12).unwrap();
    (0..rows * cols)
        .map(|p| row_of(p / cols, p % cols).iter().zip(coef.iter()).map(|(u, v)| u * v).sum())
        .collect()
}

/// Least-squares paraboloid through `(u, v, z)` samples, evaluated at the
/// origin. `None` unless the scaled design matrix has condition below 1e3.
pub fn paraboloid_at_origin(samples: &[(f64, f64, f64)], scale: f64) -> Option<f64> {
    if samples.len() < 6 {
        return None;
    }
    let a = DMatrix::from_fn(samples.len(), 6, |r, c| {
        let (u, v) = (samples[r].0 / scale, samples[r].1 / scale);
        [u * u, u * v, v * v, u, v, 1.0][c]
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.2));
    let svd = a.svd(true, true);
    let (hi, lo) = (svd.singular_values.max(), svd.singular_values.min());
    if !(lo > 0.0) || hi / lo > 1e3 {
        return None;
    }
    Some(svd.solve(&y, 0.0).unwrap()[5])
}

/// Histogram masses over `bins` equal bins of `[lo, hi]`, last bin closed.
pub fn masses(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut m = vec![0.0; bins];
    for &v in values {
        let k = if hi > lo { ((v - lo) / (hi - lo) * bins as f64).floor() as usize } else { 0 };
        m[k.min(bins - 1)] += 1.0 / values.len() as f64;
    }
    m
}

/// Optimal transport cost between two mass vectors with ground cost
/// `|i - j| * width`, solved as a linear programme.
pub fn transport_lp(a: &[f64], b: &[f64], width: f64) -> f64 {
    let n = a.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let flows: Vec<Vec<_>> = (0..n)
        .map(|i| (0..n).map(|j| lp.add_var(i.abs_diff(j) as f64 * width, (0.0, f64::INFINITY))).collect())
        .collect();
    for i in 0..n {
        let row: Vec<_> = (0..n).map(|j| (flows[i][j], 1.0)).collect();
        lp.add_constraint(&row, ComparisonOp::Eq, a[i]);
    }
    // one column constraint is implied by the others and the equal totals
    for j in 0..n - 1 {
        let col: Vec<_> = (0..n).map(|i| (flows[i][j], 1.0)).collect();
        lp.add_constraint(&col, ComparisonOp::Eq, b[j]);
    }
    lp.solve().expect("transport problem is feasible").objective()
}

/// Dense NCHW array for the neural oracles.
#[derive(Debug, Clone)]
pub struct Nd {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Nd {
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        let [_, cc, h, w] = self.dims;
        self.data[((n * cc + c) * h + y) * w + x]
    }

    pub fn from_tensor<T: demfill_core::neural::Real>(t: &Tensor4<T>) -> Self {
        Self { dims: t.dims(), data: t.data().iter().map(|v| v.widen()).collect() }
    }
}

/// Convolution with "same" padding: output length `ceil(len / stride)`,
/// total padding split with the smaller half before.
pub fn conv(x: &Nd, w: &Nd, bias: &[f64], stride: usize, dil: usize) -> Nd {
    let [n, cin, h, wd] = x.dims;
    let [cout, _, kh, kw] = w.dims;
    let pads = |len: usize, k: usize| {
        let out = len.div_ceil(stride);
        let total = ((out - 1) * stride + (k - 1) * dil + 1).saturating_sub(len);
        (out, total / 2)
    };
    let (oh, pt) = pads(h, kh);
    let (ow, pl) = pads(wd, kw);
    let (ph, pw) = (h + 2 * pt + kh * dil + stride, wd + 2 * pl + kw * dil + stride);
    let mut padded = vec![0.0; n * cin * ph * pw];
    for b in 0..n {
        for c in 0..cin {
            for y in 0..h {
                for xx in 0..wd {
                    padded[((b * cin + c) * ph + y + pt) * pw + xx + pl] = x.at(b, c, y, xx);
                }
            }
        }
    }
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = bias[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let (y, xx) = (oy * stride + ky * dil, ox * stride + kx * dil);
                                s += w.at(co, ci, ky, kx) * padded[((b * cin + ci) * ph + y) * pw + xx];
                            }
                        }
                    }
                    out[((b * cout + co) * oh + oy) * ow + ox] = s;
                }
            }
        }
    }
    Nd { dims: [n, cout, oh, ow], data: out }
}

pub fn elu(x: &Nd) -> Nd {
    Nd { dims: x.dims, data: x.data.iter().map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 }).collect() }
}

pub fn tanh(x: &Nd) -> Nd {
    Nd { dims: x.dims, data: x.data.iter().map(|v| v.tanh()).collect() }
}

pub fn upsample(x: &Nd) -> Nd {
    let [n, c, h, w] = x.dims;
    let mut data = Vec::with_capacity(n * c * h * w * 4);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    data.push(x.at(b, ch, y / 2, xx / 2));
                }
            }
        }
    }
    Nd { dims: [n, c, 2 * h, 2 * w], data }
}

/// Contextual attention over a single-batch feature map. Returns the output
/// and, per foreground location, the softmax weights over source patches.
pub fn attention(fg: &Nd, bg: &Nd, mask: &VoidMask, lambda: f64, patch: usize, eps: f64) -> Option<(Nd, Vec<Vec<f64>>)> {
    let [_, c, h, w] = fg.dims;
    let half = patch as i64 / 2;
    let patch_of = |t: &Nd, y: i64, x: i64| -> Vec<f64> {
        let mut v = Vec::new();
        for ch in 0..c {
            for dy in -half..=half {
                for dx in -half..=half {
                    let (yy, xx) = (y + dy, x + dx);
                    let inside = yy >= 0 && xx >= 0 && yy < h as i64 && xx < w as i64;
                    v.push(if inside { t.at(0, ch, yy as usize, xx as usize) } else { 0.0 });
                }
            }
        }
        v
    };
    let mut sources = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let fits = y - half >= 0 && x - half >= 0 && y + half < h as i64 && x + half < w as i64;
            let known = fits
                && (y - half..=y + half).all(|a| (x - half..=x + half).all(|b| mask.is_known(a as usize, b as usize)));
            if known {
                sources.push(patch_of(bg, y, x));
            }
        }
    }
    if sources.is_empty() {
        return None;
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt().max(eps);
    let mut weights = Vec::with_capacity(h * w);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let f = patch_of(fg, y, x);
            let scores: Vec<f64> = sources
                .iter()
                .map(|s| lambda * f.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() / (norm(&f) * norm(s)))
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            weights.push(e.into_iter().map(|v| v / z).collect::<Vec<f64>>());
        }
    }
    // every output pixel averages the blended patches of all foreground
    // locations whose patch covers it
    let p = patch as i64;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for py in 0..h as i64 {
            for px in 0..w as i64 {
                let (mut sum, mut count) = (0.0, 0.0);
                for y in (py - half).max(0)..=(py + half).min(h as i64 - 1) {
                    for x in (px - half).max(0)..=(px + half).min(w as i64 - 1) {
                        let (dy, dx) = (py - y + half, px - x + half);
                        let slot = ch as i64 * p * p + dy * p + dx;
                        let a = &weights[(y * w as i64 + x) as usize];
                        sum += a.iter().zip(&sources).map(|(wq, s)| wq * s[slot as usize]).sum::<f64>();
                        count += 1.0;
                    }
                }
                out[(ch * h + py as usize) * w + px as usize] = sum / count;
            }
        }
    }
    Some((Nd { dims: [1, c, h, w], data: out }, weights))
}

fn weighted_output(net: &Sequential<f64>, x: &Tensor4<f64>, c: &[f64]) -> f64 {
    net.forward(x).unwrap().data().iter().zip(c).map(|(y, c)| y * c).sum()
}

/// Compares the reverse pass of `net` against central differences of
/// `L = Σ c·net(x)` for every input entry and every parameter. Returns the
/// number of entries checked and the worst relative error.
pub fn gradient_check(net: &mut Sequential<f64>, x: &Tensor4<f64>, c: &[f64], h: f64) -> (usize, f64) {
    let acts = net.forward_trace(x).unwrap();
    let out = acts.last().unwrap();
    assert_eq!(out.len(), c.len());
    let g = Tensor4::from_vec(out.dims(), c.to_vec()).unwrap();
    let (gx, pgrads) = net.backward(&acts, &g).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut xp = x.clone();
    for k in 0..x.len() {
        let v = x.data()[k];
        xp.data_mut()[k] = v + h;
        let up = weighted_output(net, &xp, c);
        xp.data_mut()[k] = v - h;
        let down = weighted_output(net, &xp, c);
        xp.data_mut()[k] = v;
        worst = worst.max(rel_err(gx.data()[k], (up - down) / (2.0 * h), 1e-6));
        checked += 1;
    }
    let n_convs = net.convs().count();
    assert_eq!(pgrads.len(), n_convs);
    for ci in 0..n_convs {
        let wlen = pgrads[ci].weight.len();
        for k in 0..wlen + pgrads[ci].bias.len() {
            let poke = |net: &mut Sequential<f64>, delta: f64| {
                let conv = net.convs_mut().nth(ci).unwrap();
                if k < wlen {
                    conv.weight.data_mut()[k] += delta;
                } else {
                    conv.bias[k - wlen] += delta;
                }
            };
            let analytic = if k < wlen { pgrads[ci].weight.data()[k] } else { pgrads[ci].bias[k - wlen] };
            poke(net, h);
            let up = weighted_output(net, x, c);
            poke(net, -2.0 * h);
            let down = weighted_output(net, x, c);
            poke(net, h);
            worst = worst.max(rel_err(analytic, (up - down) / (2.0 * h), 1e-6));
            checked += 1;
        }
    }
    (checked, worst)
}

/// Op kinds present in a network, for reporting.
pub fn describe(net: &Sequential<f64>) -> String {
    net.ops()
        .iter()
        .map(|op| match op {
            Op::Conv(c) => format!("conv{}x{}/s{}d{}", c.weight.height(), c.weight.width(), c.stride, c.dilation),
            Op::Elu => "elu".into(),
            Op::Tanh => "tanh".into(),
            Op::Upsample => "up2".into(),
        })
        .collect::<Vec<_>>()
        .join("-")
}
