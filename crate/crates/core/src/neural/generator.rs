//! Coarse-to-fine generator: a coarse stage, two refinement branches (one
//! with contextual attention) and a decoder, with compositing of the known
//! pixels after each stage.

use super::attention::{contextual_attention, downsample_mask};
use super::sequential::Sequential;
use super::spec::{LayerSpec, NetworkSpec};
use super::tensor::Tensor4;
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::raster::{normalize, DemGrid, Normalization, VoidMask};

/// Network input built from a DEM: normalised heights and the void mask,
/// zero-padded (and marked unknown) up to the spec's size multiple.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub x: Tensor4<f32>,
    pub mask: VoidMask,
    pub norm: Normalization,
    pub rows: usize,
    pub cols: usize,
}

impl Prepared {
    pub(crate) fn new(d0: &DemGrid, mask: &VoidMask, multiple: usize) -> Result<Self> {
        let (normed, norm) = normalize(d0, mask)?;
        let (rows, cols) = d0.shape();
        let (ph, pw) = (rows.next_multiple_of(multiple), cols.next_multiple_of(multiple));
        let padded = VoidMask::from_fn(ph, pw, |i, j| i >= rows || j >= cols || mask.is_unknown(i, j));
        let mut data = vec![0.0f32; 2 * ph * pw];
        for i in 0..ph {
            for j in 0..pw {
                if i < rows && j < cols {
                    data[i * pw + j] = normed.get(i, j) as f32;
                }
                data[ph * pw + i * pw + j] = if padded.is_unknown(i, j) { 1.0 } else { 0.0 };
            }
        }
        Ok(Self {
            x: Tensor4::from_vec([1, 2, ph, pw], data)?,
            mask: padded,
            norm,
            rows,
            cols,
        })
    }

    /// Replaces the height channel inside the void with `fill`.
    fn composite(&self, fill: &Tensor4<f32>) -> Tensor4<f32> {
        let mut x = self.x.clone();
        let hw = self.mask.bits().len();
        for (k, &unknown) in self.mask.bits().iter().enumerate() {
            if unknown {
                x.data_mut()[k] = fill.data()[k];
            }
        }
        debug_assert_eq!(x.len(), 2 * hw);
        x
    }

    /// Known pixels from `d0` bit for bit, denormalised network output in the
    /// void.
    fn to_grid(&self, d0: &DemGrid, mask: &VoidMask, out: &Tensor4<f32>) -> Result<DemGrid> {
        let pw = out.width();
        let mut values = d0.values().to_vec();
        for (i, j) in mask.unknown_pixels() {
            values[i * self.cols + j] = self.norm.invert(out.data()[i * pw + j] as f64);
        }
        d0.replace_values(values)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    pub coarse: DemGrid,
    pub refined: DemGrid,
}

#[derive(Debug, Clone)]
pub struct Generator {
    spec: NetworkSpec,
    coarse: Sequential<f32>,
    branch_a: Sequential<f32>,
    branch_b_pre: Sequential<f32>,
    attention: Option<(usize, f64)>,
    branch_b_post: Sequential<f32>,
    decoder: Sequential<f32>,
}

impl Generator {
    pub fn new(spec: &NetworkSpec, weights: &WeightStore) -> Result<Self> {
        weights.check(spec)?;
        let split = spec
            .branch_b
            .iter()
            .position(|l| matches!(l, LayerSpec::Attention { .. }));
        let (pre, post, attention) = match split {
            Some(k) => {
                let LayerSpec::Attention { patch, lambda } = spec.branch_b[k] else {
                    unreachable!()
                };
                let pre = Sequential::from_indexed("branch_b", spec.branch_b[..k].iter().enumerate(), weights)?;
                let post = Sequential::from_indexed(
                    "branch_b",
                    spec.branch_b.iter().enumerate().skip(k + 1),
                    weights,
                )?;
                (pre, post, Some((patch, lambda)))
            }
            None => (
                Sequential::from_layers("branch_b", &spec.branch_b, weights)?,
                Sequential::new(Vec::new()),
                None,
            ),
        };
        Ok(Self {
            spec: spec.clone(),
            coarse: Sequential::from_layers("coarse", &spec.coarse, weights)?,
            branch_a: Sequential::from_layers("branch_a", &spec.branch_a, weights)?,
            branch_b_pre: pre,
            attention,
            branch_b_post: post,
            decoder: Sequential::from_layers("decoder", &spec.decoder, weights)?,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn forward(&self, d0: &DemGrid, mask: &VoidMask) -> Result<GeneratorOutput> {
        d0.check_shape(mask)?;
        let prep = Prepared::new(d0, mask, self.spec.size_multiple())?;
        let [_, _, ph, pw] = prep.x.dims();
        let expect = |t: &Tensor4<f32>, stage: &str| {
            if t.dims() != [1, 1, ph, pw] {
                return Err(Error::Shape(format!(
                    "{stage} produced {:?}, expected [1, 1, {ph}, {pw}]",
                    t.dims()
                )));
            }
            Ok(())
        };

        let coarse = self.coarse.forward(&prep.x)?;
        expect(&coarse, "coarse stage")?;
        let xc = prep.composite(&coarse);

        let a = self.branch_a.forward(&xc)?;
        let mut b = self.branch_b_pre.forward(&xc)?;
        if let Some((patch, lambda)) = self.attention {
            let fmask = downsample_mask(&prep.mask, b.height(), b.width());
            b = contextual_attention(&b, &b, &fmask, lambda, patch)?.output;
        }
        let b = self.branch_b_post.forward(&b)?;
        let refined = self.decoder.forward(&Tensor4::concat(&[&a, &b])?)?;
        expect(&refined, "decoder")?;

        Ok(GeneratorOutput {
            coarse: prep.to_grid(d0, mask, &coarse)?,
            refined: prep.to_grid(d0, mask, &refined)?,
        })
    }
}

/// One-shot forward pass: builds the generator and runs it.
pub fn generator_forward(
    d0: &DemGrid,
    mask: &VoidMask,
    spec: &NetworkSpec,
    weights: &WeightStore,
) -> Result<GeneratorOutput> {
    Generator::new(spec, weights)?.forward(d0, mask)
}
