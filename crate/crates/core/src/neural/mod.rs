//! Generative fill network: tensors and kernels, architecture specs, weight
//! files, the coarse-to-fine generator with contextual attention, and the
//! losses used to train and evaluate it.

pub mod attention;
pub mod generator;
pub mod loss;
pub mod ops;
pub mod sequential;
pub mod spec;
pub mod tensor;
pub mod train;
pub mod weights;
pub mod wgan;

pub use attention::{contextual_attention, downsample_mask, Attention};
pub use generator::{generator_forward, Generator, GeneratorOutput};
pub use loss::{loss_l1_discounted, LossConfig};
pub use ops::{conv2d, conv2d_backward, elu, tanh, upsample2};
pub use sequential::{Conv, Op, ParamGrad, Sequential};
pub use spec::{layer_slots, parse_layers, LayerSpec, NetworkSpec, DESK_SPEC, LFE_DILATIONS};
pub use tensor::{Real, Tensor4};
pub use train::{synthetic_dataset, train_coarse, train_coarse_from, TrainConfig, TrainReport, TrainSample};
pub use weights::{load_weights, save_weights, NamedTensor, WeightStore};
pub use wgan::{gradient_penalty_loss, linear_critic, wgan_gp_eval, BBox, Critic, WganLoss};

use crate::error::Result;

/// Runs a single LFE stack (six dilated 3×3 conv + ELU stages) with the given
/// weights and biases, in stage order.
pub fn lfe_forward<T: Real>(x: &Tensor4<T>, stages: &[(Tensor4<T>, Vec<T>)]) -> Result<Tensor4<T>> {
    if stages.len() != LFE_DILATIONS.len() {
        return Err(crate::error::Error::Shape(format!(
            "LFE needs {} stages, got {}",
            LFE_DILATIONS.len(),
            stages.len()
        )));
    }
    let mut cur = x.clone();
    for ((w, b), &d) in stages.iter().zip(&LFE_DILATIONS) {
        cur = elu(&conv2d(&cur, w, b, 1, d)?);
    }
    Ok(cur)
}
