//! WGAN-GP loss evaluation for a global critic and a local critic that sees
//! only the region around the void.

use super::sequential::{Op, Sequential};
use super::spec::LayerSpec;
use super::tensor::{Real, Tensor4};
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::raster::VoidMask;

/// Local crops are grown to a multiple of this size.
pub const LOCAL_CROP_MULTIPLE: usize = 8;

/// A conv stack whose final single-channel map is summed into one score per
/// sample.
#[derive(Debug, Clone)]
pub struct Critic<T> {
    net: Sequential<T>,
}

impl<T: Real> Critic<T> {
    pub fn new(net: Sequential<T>) -> Result<Self> {
        match net.convs().last() {
            Some(c) if c.weight.batch() == 1 => Ok(Self { net }),
            Some(c) => Err(Error::InvalidParam(format!(
                "critic head must have one output channel, has {}",
                c.weight.batch()
            ))),
            None => Err(Error::InvalidParam("critic has no conv layer".into())),
        }
    }

    /// Builds a critic from a layer list whose tensors live under `prefix`
    /// in `store`.
    pub fn from_layers(prefix: &str, layers: &[LayerSpec], store: &WeightStore) -> Result<Self> {
        Self::new(Sequential::from_layers(prefix, layers, store)?)
    }

    pub fn net(&self) -> &Sequential<T> {
        &self.net
    }

    /// One score per batch entry.
    pub fn score(&self, x: &Tensor4<T>) -> Result<Vec<f64>> {
        let y = self.net.forward(x)?;
        Ok(per_sample_sums(&y))
    }

    /// Scores and the gradient of each sample's score with respect to its
    /// input.
    pub fn input_gradient(&self, x: &Tensor4<T>) -> Result<(Vec<f64>, Tensor4<T>)> {
        let acts = self.net.forward_trace(x)?;
        let out = acts.last().unwrap();
        let ones = Tensor4::from_vec(out.dims(), vec![T::one(); out.len()])?;
        let (g, _) = self.net.backward(&acts, &ones)?;
        Ok((per_sample_sums(out), g))
    }
}

fn per_sample_sums<T: Real>(y: &Tensor4<T>) -> Vec<f64> {
    let per = y.len() / y.batch().max(1);
    y.data().chunks(per.max(1)).map(|c| c.iter().map(|v| v.widen()).sum()).collect()
}

/// Axis-aligned pixel box, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BBox {
    /// Tight box around the unknown pixels.
    pub fn of_mask(mask: &VoidMask) -> Result<Self> {
        let mut b: Option<BBox> = None;
        for (i, j) in mask.unknown_pixels() {
            let e = b.get_or_insert(BBox {
                top: i,
                left: j,
                bottom: i + 1,
                right: j + 1,
            });
            e.top = e.top.min(i);
            e.left = e.left.min(j);
            e.bottom = e.bottom.max(i + 1);
            e.right = e.right.max(j + 1);
        }
        b.ok_or(Error::EmptyMask)
    }

    pub fn height(&self) -> usize {
        self.bottom.saturating_sub(self.top)
    }

    pub fn width(&self) -> usize {
        self.right.saturating_sub(self.left)
    }

    pub fn is_empty(&self) -> bool {
        self.height() == 0 || self.width() == 0
    }

    /// Grows each side to a multiple of `m`, extending past the far edge
    /// first and then back over the near edge, clamped to `rows × cols`.
    pub fn padded(&self, m: usize, rows: usize, cols: usize) -> Self {
        let grow = |lo: usize, hi: usize, limit: usize| {
            let want = (hi - lo).next_multiple_of(m).min(limit);
            let hi2 = (lo + want).min(limit);
            (hi2 - want, hi2)
        };
        let (top, bottom) = grow(self.top, self.bottom, rows);
        let (left, right) = grow(self.left, self.right, cols);
        Self {
            top,
            left,
            bottom,
            right,
        }
    }
}

fn crop<T: Real>(x: &Tensor4<T>, b: BBox) -> Tensor4<T> {
    let [n, c, _, w] = x.dims();
    let mut data = Vec::with_capacity(n * c * b.height() * b.width());
    for bn in 0..n {
        for ch in 0..c {
            let p = x.plane(bn, ch);
            for y in b.top..b.bottom {
                data.extend_from_slice(&p[y * w + b.left..y * w + b.right]);
            }
        }
    }
    Tensor4::from_vec([n, c, b.height(), b.width()], data).expect("sized above")
}

/// `mean D(fake) - mean D(real) + lambda * mean (|grad D(x_hat)| - 1)^2`
/// with `x_hat = eps * real + (1 - eps) * fake` per sample.
pub fn gradient_penalty_loss<T: Real>(
    real: &Tensor4<T>,
    fake: &Tensor4<T>,
    critic: &Critic<T>,
    eps: &[f64],
    gp_lambda: f64,
) -> Result<f64> {
    let n = real.batch();
    if real.dims() != fake.dims() || eps.len() != n || n == 0 {
        return Err(Error::Shape(format!(
            "real {:?}, fake {:?}, {} epsilons",
            real.dims(),
            fake.dims(),
            eps.len()
        )));
    }
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let d_real = mean(critic.score(real)?);
    let d_fake = mean(critic.score(fake)?);

    let per = real.len() / n;
    let mixed: Vec<T> = real
        .data()
        .iter()
        .zip(fake.data())
        .enumerate()
        .map(|(k, (&r, &f))| {
            let e = eps[k / per];
            T::cast(e * r.widen() + (1.0 - e) * f.widen())
        })
        .collect();
    let (_, grad) = critic.input_gradient(&Tensor4::from_vec(real.dims(), mixed)?)?;
    let penalty = mean(
        grad.data()
            .chunks(per)
            .map(|g| {
                let norm = g.iter().map(|v| v.widen() * v.widen()).sum::<f64>().sqrt();
                (norm - 1.0).powi(2)
            })
            .collect(),
    );
    Ok(d_fake - d_real + gp_lambda * penalty)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WganLoss {
    pub global: f64,
    pub local: f64,
}

/// Global loss on the full inputs and local loss on the void's bounding
/// box, grown to a multiple of [`LOCAL_CROP_MULTIPLE`].
pub fn wgan_gp_eval<T: Real>(
    real: &Tensor4<T>,
    fake: &Tensor4<T>,
    global: &Critic<T>,
    local: &Critic<T>,
    bbox: BBox,
    eps: &[f64],
    gp_lambda: f64,
) -> Result<WganLoss> {
    if bbox.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (h, w) = (real.height(), real.width());
    if bbox.bottom > h || bbox.right > w {
        return Err(Error::Shape(format!("bounding box {bbox:?} exceeds {h}x{w}")));
    }
    let global_loss = gradient_penalty_loss(real, fake, global, eps, gp_lambda)?;
    let b = bbox.padded(LOCAL_CROP_MULTIPLE, h, w);
    let local_loss = gradient_penalty_loss(&crop(real, b), &crop(fake, b), local, eps, gp_lambda)?;
    Ok(WganLoss {
        global: global_loss,
        local: local_loss,
    })
}

/// `D(x) = sum(x)` over `channels` inputs: a single 1×1 conv with unit
/// weights and no bias.
pub fn linear_critic<T: Real>(channels: usize) -> Critic<T> {
    let w = Tensor4::from_vec([1, channels, 1, 1], vec![T::one(); channels]).expect("sized");
    Critic::new(Sequential::new(vec![Op::Conv(super::sequential::Conv::new(
        w,
        vec![T::zero()],
        1,
        1,
    ))]))
    .expect("one output channel")
}
