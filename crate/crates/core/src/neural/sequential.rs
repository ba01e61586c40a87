//! A straight chain of differentiable layers with a reverse pass.

use super::ops::{
    conv2d, conv2d_backward, elu, elu_backward, tanh, tanh_backward, upsample2, upsample2_backward,
};
use super::spec::{LayerSpec, LFE_DILATIONS};
use super::tensor::{Real, Tensor4};
use super::weights::WeightStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub dilation: usize,
    /// Slot name prefix, e.g. `coarse.0`; weights live at `{slot}.weight`.
    pub slot: String,
}

impl<T: Real> Conv<T> {
    pub fn new(weight: Tensor4<T>, bias: Vec<T>, stride: usize, dilation: usize) -> Self {
        Self {
            weight,
            bias,
            stride,
            dilation,
            slot: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op<T> {
    Conv(Conv<T>),
    Elu,
    Tanh,
    Upsample,
}

/// Parameter gradients of one conv layer.
#[derive(Debug, Clone)]
pub struct ParamGrad<T> {
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    ops: Vec<Op<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(ops: Vec<Op<T>>) -> Self {
        Self { ops }
    }

    /// Builds the ops of one stage from its layer list and the matching
    /// tensors of `store`. Attention layers are not allowed here.
    pub fn from_layers(stage: &str, layers: &[LayerSpec], store: &WeightStore) -> Result<Self> {
        Self::from_indexed(stage, layers.iter().enumerate(), store)
    }

    pub(crate) fn from_indexed<'a>(
        stage: &str,
        layers: impl Iterator<Item = (usize, &'a LayerSpec)>,
        store: &WeightStore,
    ) -> Result<Self> {
        let load = |slot: String, stride: usize, dilation: usize| -> Result<Op<T>> {
            let w = store.require(&format!("{slot}.weight"))?;
            let b = store.require(&format!("{slot}.bias"))?;
            if w.dims.len() != 4 || b.dims.len() != 1 || b.dims[0] != w.dims[0] {
                return Err(Error::Weights(format!("bad shapes for `{slot}`")));
            }
            let dims = [w.dims[0], w.dims[1], w.dims[2], w.dims[3]];
            let weight = Tensor4::from_vec(dims, w.data.iter().map(|&v| T::cast(v as f64)).collect())?;
            Ok(Op::Conv(Conv {
                weight,
                bias: b.data.iter().map(|&v| T::cast(v as f64)).collect(),
                stride,
                dilation,
                slot,
            }))
        };
        let mut ops = Vec::new();
        for (idx, layer) in layers {
            match *layer {
                LayerSpec::Conv { stride, dilation, .. } => ops.push(load(format!("{stage}.{idx}"), stride, dilation)?),
                LayerSpec::Lfe { .. } => {
                    for (j, &d) in LFE_DILATIONS.iter().enumerate() {
                        ops.push(load(format!("{stage}.{idx}.lfe{j}"), 1, d)?);
                        ops.push(Op::Elu);
                    }
                }
                LayerSpec::Upsample => ops.push(Op::Upsample),
                LayerSpec::Elu => ops.push(Op::Elu),
                LayerSpec::Tanh => ops.push(Op::Tanh),
                LayerSpec::Attention { .. } => {
                    return Err(Error::Spec {
                        line: 0,
                        msg: format!("attention cannot be part of a sequential chain in {stage}"),
                    })
                }
            }
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[Op<T>] {
        &self.ops
    }

    pub fn convs(&self) -> impl Iterator<Item = &Conv<T>> {
        self.ops.iter().filter_map(|op| match op {
            Op::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn convs_mut(&mut self) -> impl Iterator<Item = &mut Conv<T>> {
        self.ops.iter_mut().filter_map(|op| match op {
            Op::Conv(c) => Some(c),
            _ => None,
        })
    }

    fn apply(op: &Op<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(match op {
            Op::Conv(c) => conv2d(x, &c.weight, &c.bias, c.stride, c.dilation)?,
            Op::Elu => elu(x),
            Op::Tanh => tanh(x),
            Op::Upsample => upsample2(x),
        })
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut cur = x.clone();
        for op in &self.ops {
            cur = Self::apply(op, &cur)?;
        }
        Ok(cur)
    }

    /// Forward pass keeping every activation; entry 0 is the input and the
    /// last entry the output.
    pub fn forward_trace(&self, x: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        let mut acts = Vec::with_capacity(self.ops.len() + 1);
        acts.push(x.clone());
        for op in &self.ops {
            let next = Self::apply(op, acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Reverse pass from the output gradient. Returns the input gradient and
    /// one [`ParamGrad`] per conv, in forward order.
    pub fn backward(&self, acts: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<ParamGrad<T>>)> {
        if acts.len() != self.ops.len() + 1 {
            return Err(Error::Shape(format!(
                "trace holds {} activations for {} ops",
                acts.len(),
                self.ops.len()
            )));
        }
        let mut g = grad_out.clone();
        let mut grads = Vec::new();
        for (i, op) in self.ops.iter().enumerate().rev() {
            g = match op {
                Op::Conv(c) => {
                    let cg = conv2d_backward(&acts[i], &c.weight, &g, c.stride, c.dilation)?;
                    grads.push(ParamGrad {
                        weight: cg.weight,
                        bias: cg.bias,
                    });
                    cg.input
                }
                Op::Elu => elu_backward(&acts[i], &g),
                Op::Tanh => tanh_backward(&acts[i + 1], &g),
                Op::Upsample => upsample2_backward(&g)?,
            };
        }
        grads.reverse();
        Ok((g, grads))
    }
}

impl Sequential<f32> {
    /// Writes the conv parameters back into their slots of `store`.
    pub fn export_into(&self, store: &mut WeightStore) -> Result<()> {
        for c in self.convs() {
            let w = store
                .get_mut(&format!("{}.weight", c.slot))
                .ok_or_else(|| Error::Weights(format!("missing tensor `{}.weight`", c.slot)))?;
            w.data.copy_from_slice(c.weight.data());
            let b = store
                .get_mut(&format!("{}.bias", c.slot))
                .ok_or_else(|| Error::Weights(format!("missing tensor `{}.bias`", c.slot)))?;
            b.data.copy_from_slice(&c.bias);
        }
        Ok(())
    }
}
