//! Spatially discounted ℓ1 reconstruction loss.

use crate::error::{Error, Result};
use crate::geometry::ring_partition;
use crate::raster::{DemGrid, VoidMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Per-ring discount; ring k is weighted `gamma^(k-1)`.
    pub discount_gamma: f64,
    /// Gradient-penalty weight of the adversarial loss.
    pub gp_lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            discount_gamma: 0.99,
            gp_lambda: 10.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount_gamma > 0.0 && self.discount_gamma <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "discount gamma must lie in (0, 1], got {}",
                self.discount_gamma
            )));
        }
        if !(self.gp_lambda >= 0.0) || !self.gp_lambda.is_finite() {
            return Err(Error::InvalidParam(format!("gp lambda must be >= 0, got {}", self.gp_lambda)));
        }
        Ok(())
    }
}

/// Per-pixel weights `gamma^(k-1)` over the void (0 on known pixels),
/// normalised to sum to one.
pub(crate) fn discount_weights(mask: &VoidMask, gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParam(format!("discount gamma must lie in (0, 1], got {gamma}")));
    }
    if mask.count_unknown() == 0 {
        return Err(Error::EmptyMask);
    }
    let rings = ring_partition(mask)?;
    let mut w: Vec<f64> = rings
        .labels()
        .iter()
        .map(|&k| if k == 0 { 0.0 } else { gamma.powi(k as i32 - 1) })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Loss value and its gradient with respect to `pred`, given normalised
/// weights. The subgradient at a zero difference is 0.
pub(crate) fn weighted_l1(pred: &[f64], truth: &[f64], weights: &[f64]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(truth)
        .zip(weights)
        .map(|((&p, &t), &w)| {
            let d = p - t;
            loss += w * d.abs();
            if d > 0.0 {
                w
            } else if d < 0.0 {
                -w
            } else {
                0.0
            }
        })
        .collect();
    (loss, grad)
}

/// Discounted mean absolute error over the void, with ring weights
/// `gamma^(k-1)`.
pub fn loss_l1_discounted(pred: &DemGrid, truth: &DemGrid, mask: &VoidMask, gamma: f64) -> Result<f64> {
    pred.check_shape(mask)?;
    truth.check_shape(mask)?;
    let w = discount_weights(mask, gamma)?;
    Ok(weighted_l1(pred.values(), truth.values(), &w).0)
}
