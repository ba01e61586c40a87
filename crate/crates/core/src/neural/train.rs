//! First-order training of the coarse stage against the discounted ℓ1 loss.

use super::generator::Prepared;
use super::loss::{discount_weights, weighted_l1};
use super::sequential::Sequential;
use super::spec::{LayerSpec, NetworkSpec};
use super::tensor::Tensor4;
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::geometry::{sample_rect_mask, synth_terrain, TerrainKind};
use crate::raster::{DemGrid, VoidMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    /// Seed of the initial weights.
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub discount_gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            seed: 0,
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
            discount_gamma: 0.99,
        }
    }
}

/// A complete terrain tile and the void to cut out of it.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub terrain: DemGrid,
    pub mask: VoidMask,
}

/// `n` synthetic `size × size` tiles cycling through hills, fractal and
/// quadratic terrain, each with one rectangular void of side `size/5` to
/// `size*3/8`. Tile `k` uses terrain seed `seed + k` and mask seed
/// `seed + 1000 + k`.
pub fn synthetic_dataset(n: usize, size: usize, seed: u64) -> Result<Vec<TrainSample>> {
    let kinds = [TerrainKind::GaussianHills, TerrainKind::Fractal, TerrainKind::Quadratic];
    let sides = ((size / 5).max(1), (size * 3 / 8).max(1));
    (0..n)
        .map(|k| {
            Ok(TrainSample {
                terrain: synth_terrain(size, size, seed + k as u64, kinds[k % kinds.len()])?,
                mask: sample_rect_mask(size, size, seed + 1000 + k as u64, 1, sides)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: WeightStore,
    /// Loss of the sample visited at each step, before that step's update.
    pub losses: Vec<f64>,
    /// Dataset-mean loss under the initial weights.
    pub initial_mean_loss: f64,
    /// Dataset-mean loss under the final weights.
    pub final_mean_loss: f64,
}

struct Example {
    x: Tensor4<f32>,
    truth: Vec<f64>,
    weights: Vec<f64>,
}

impl Example {
    fn new(s: &TrainSample, multiple: usize, gamma: f64) -> Result<Self> {
        s.terrain.check_shape(&s.mask)?;
        let prep = Prepared::new(&s.terrain, &s.mask, multiple)?;
        let [_, _, ph, pw] = prep.x.dims();
        let ring_w = discount_weights(&s.mask, gamma)?;
        let mut truth = vec![0.0; ph * pw];
        let mut weights = vec![0.0; ph * pw];
        for i in 0..prep.rows {
            for j in 0..prep.cols {
                truth[i * pw + j] = prep.norm.apply(s.terrain.get(i, j));
                weights[i * pw + j] = ring_w[i * prep.cols + j];
            }
        }
        Ok(Self {
            x: prep.x,
            truth,
            weights,
        })
    }

    fn loss(&self, out: &Tensor4<f32>) -> (f64, Vec<f64>) {
        let pred: Vec<f64> = out.data().iter().map(|&v| v as f64).collect();
        weighted_l1(&pred, &self.truth, &self.weights)
    }
}

/// Adam state for one parameter tensor.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f32], grad: &[f32], cfg: &TrainConfig, t: i32) {
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            let g = g as f64;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let update = cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
            *p = (*p as f64 - update) as f32;
        }
    }
}

fn check_trainable(spec: &NetworkSpec) -> Result<()> {
    if spec.coarse.iter().any(|l| matches!(l, LayerSpec::Attention { .. })) {
        return Err(Error::Spec {
            line: 0,
            msg: "coarse stage must be differentiable".into(),
        });
    }
    Ok(())
}

fn mean_loss(net: &Sequential<f32>, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += ex.loss(&net.forward(&ex.x)?).0;
    }
    Ok(total / examples.len() as f64)
}

/// Trains the coarse stage from weights initialised with `cfg.seed`.
pub fn train_coarse(dataset: &[TrainSample], spec: &NetworkSpec, cfg: &TrainConfig) -> Result<TrainReport> {
    train_coarse_from(dataset, spec, WeightStore::init(spec, cfg.seed), cfg)
}

/// Trains the coarse stage starting from `weights`. Step `t` visits
/// `dataset[t % len]`; the other stages' parameters pass through untouched.
pub fn train_coarse_from(
    dataset: &[TrainSample],
    spec: &NetworkSpec,
    mut weights: WeightStore,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidParam("training needs at least one sample".into()));
    }
    if !(cfg.learning_rate >= 0.0)
        || !(0.0..1.0).contains(&cfg.beta1)
        || !(0.0..1.0).contains(&cfg.beta2)
        || !(cfg.epsilon > 0.0)
    {
        return Err(Error::InvalidParam(format!("bad optimiser settings {cfg:?}")));
    }
    check_trainable(spec)?;
    weights.check(spec)?;
    let multiple = spec.size_multiple();
    let examples = dataset
        .iter()
        .map(|s| Example::new(s, multiple, cfg.discount_gamma))
        .collect::<Result<Vec<_>>>()?;

    let mut net = Sequential::<f32>::from_layers("coarse", &spec.coarse, &weights)?;
    let mut moments: Vec<(Moments, Moments)> = net
        .convs()
        .map(|c| (Moments::new(c.weight.len()), Moments::new(c.bias.len())))
        .collect();

    let initial_mean_loss = mean_loss(&net, &examples)?;
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let ex = &examples[step % examples.len()];
        let acts = net.forward_trace(&ex.x)?;
        let out = acts.last().unwrap();
        let (loss, grad) = ex.loss(out);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        losses.push(loss);
        let g = Tensor4::from_vec(out.dims(), grad.iter().map(|&v| v as f32).collect())?;
        let (_, grads) = net.backward(&acts, &g)?;
        let t = step as i32 + 1;
        for ((conv, pg), (mw, mb)) in net.convs_mut().zip(&grads).zip(&mut moments) {
            mw.step(conv.weight.data_mut(), pg.weight.data(), cfg, t);
            mb.step(&mut conv.bias, &pg.bias, cfg, t);
        }
    }
    let final_mean_loss = mean_loss(&net, &examples)?;
    if !final_mean_loss.is_finite() {
        return Err(Error::NonFiniteLoss { step: cfg.steps });
    }
    net.export_into(&mut weights)?;
    Ok(TrainReport {
        weights,
        losses,
        initial_mean_loss,
        final_mean_loss,
    })
}
