//! Shepard inverse distance weighting with masked 3×3 smoothing passes.

use crate::error::{Error, Result};
use crate::raster::{DemGrid, VoidMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdwParams {
    /// Distance exponent.
    pub power: f64,
    /// Search radius in pixels (Euclidean).
    pub radius: f64,
    /// Number of 3×3 mean-filter passes over the filled pixels.
    pub smoothing_passes: usize,
}

impl Default for IdwParams {
    fn default() -> Self {
        Self {
            power: 2.0,
            radius: 32.0,
            smoothing_passes: 2,
        }
    }
}

impl IdwParams {
    fn validate(&self) -> Result<()> {
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::InvalidParam(format!("IDW power must be > 0, got {}", self.power)));
        }
        if !(self.radius >= 1.0) || !self.radius.is_finite() {
            return Err(Error::InvalidParam(format!("IDW radius must be >= 1, got {}", self.radius)));
        }
        Ok(())
    }
}

pub fn fill_idw(grid: &DemGrid, mask: &VoidMask, params: &IdwParams) -> Result<DemGrid> {
    grid.check_shape(mask)?;
    params.validate()?;
    if mask.count_known() == 0 {
        return Err(Error::NoKnownPixels);
    }
    let (rows, cols) = grid.shape();
    let reach = params.radius.floor() as usize;
    let r2 = params.radius * params.radius;
    let half_power = params.power / 2.0;

    let mut out = grid.values().to_vec();
    for (pi, pj) in mask.unknown_pixels() {
        // Weighted mean taken about a reference height so that a constant
        // neighbourhood reproduces its value bit-for-bit.
        let mut reference = None;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in pi.saturating_sub(reach)..=(pi + reach).min(rows - 1) {
            let di = i as f64 - pi as f64;
            for j in pj.saturating_sub(reach)..=(pj + reach).min(cols - 1) {
                if mask.is_unknown(i, j) {
                    continue;
                }
                let dj = j as f64 - pj as f64;
                let d2 = di * di + dj * dj;
                if d2 > r2 {
                    continue;
                }
                let w = 1.0 / d2.powf(half_power);
                let z = grid.get(i, j);
                let z0 = *reference.get_or_insert(z);
                num += w * (z - z0);
                den += w;
            }
        }
        out[pi * cols + pj] = if let Some(z0) = reference {
            z0 + num / den
        } else {
            nearest_known(grid, mask, pi, pj)
        };
    }

    for _ in 0..params.smoothing_passes {
        let prev = out.clone();
        for (pi, pj) in mask.unknown_pixels() {
            let centre = prev[pi * cols + pj];
            let mut sum = 0.0;
            let mut n = 0.0;
            for i in pi.saturating_sub(1)..=(pi + 1).min(rows - 1) {
                for j in pj.saturating_sub(1)..=(pj + 1).min(cols - 1) {
                    sum += prev[i * cols + j] - centre;
                    n += 1.0;
                }
            }
            out[pi * cols + pj] = centre + sum / n;
        }
    }
    grid.replace_values(out)
}

/// Value of the Euclidean-nearest known pixel; ties go to the first in
/// row-major order.
fn nearest_known(grid: &DemGrid, mask: &VoidMask, pi: usize, pj: usize) -> f64 {
    let mut best = (u64::MAX, 0.0);
    for i in 0..grid.rows() {
        for j in 0..grid.cols() {
            if mask.is_unknown(i, j) {
                continue;
            }
            let d2 = (i.abs_diff(pi).pow(2) + j.abs_diff(pj).pow(2)) as u64;
            if d2 < best.0 {
                best = (d2, grid.get(i, j));
            }
        }
    }
    best.1
}
