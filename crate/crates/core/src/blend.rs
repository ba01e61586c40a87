//! Generator fill followed by boundary blending.
//!
//! The unknown pixels are peeled into L1 rings around the known region. For
//! the first `w` rings the paraboloid extension `e` of the known surface is
//! computed exactly as in [`fill_extend`](crate::fill_extend), and the output
//! is `e + α_k (d - e)` with `α_k = β((k - 1) / w)`. The extension itself,
//! not the blended value, is what later rings see as known data.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fillers::{fill_extend, fill_idw, fill_spline, IdwParams, RingExtender, SplineParams};
use crate::geometry::ring_partition;
use crate::neural::Generator;
use crate::raster::{DemGrid, VoidMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendConfig {
    /// Number of rings over which the fill takes over from the extension.
    pub width: usize,
    pub fit_radius: usize,
    pub sigmoid_steepness: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            width: 8,
            fit_radius: 3,
            sigmoid_steepness: 10.0,
        }
    }
}

impl BlendConfig {
    fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::InvalidParam("blend width must be at least 1".into()));
        }
        if self.fit_radius == 0 {
            return Err(Error::InvalidParam("fit radius must be at least 1".into()));
        }
        if !(self.sigmoid_steepness > 0.0) || !self.sigmoid_steepness.is_finite() {
            return Err(Error::InvalidParam("sigmoid steepness must be > 0".into()));
        }
        Ok(())
    }
}

/// Logistic curve rescaled to a strictly increasing bijection of `[0, 1]`.
///
/// Written through `tanh`, which is odd, so `β(0) = 0`, `β(½) = ½` and
/// `β(1) = 1` hold exactly in floating point.
pub fn blend_weight(t: f64, steepness: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    let edge = (0.25 * steepness).tanh();
    (((t - 0.5) * 0.5 * steepness).tanh() + edge) / (2.0 * edge)
}

/// Blends the smooth extension of `d0` into the complete fill `d` over the
/// first `cfg.width` rings. Known pixels take `d0`'s values; rings beyond
/// the band keep `d`'s.
pub fn blend_boundary(
    d0: &DemGrid,
    d: &DemGrid,
    mask: &VoidMask,
    cfg: &BlendConfig,
) -> Result<DemGrid> {
    cfg.validate()?;
    d0.check_shape(mask)?;
    d0.check_same_shape(d)?;
    if let Some(k) = d.values().iter().position(|&v| v == d.nodata()) {
        return Err(Error::InvalidParam(format!(
            "fill still has a void at ({}, {})",
            k / d.cols(),
            k % d.cols()
        )));
    }
    let partition = ring_partition(mask)?;
    let cols = d0.cols();

    let mut out = d.values().to_vec();
    for (k, &unknown) in mask.bits().iter().enumerate() {
        if !unknown {
            out[k] = d0.values()[k];
        }
    }

    let mut ext = RingExtender::new(d0, mask, cfg.fit_radius)?;
    for (k, ring) in partition.rings().take(cfg.width) {
        let alpha = blend_weight((k - 1) as f64 / cfg.width as f64, cfg.sigmoid_steepness);
        let extension = ext.extend_ring(ring)?;
        for (&(i, j), &e) in ring.iter().zip(&extension) {
            let fill = d.get(i, j);
            let (lo, hi) = if e <= fill { (e, fill) } else { (fill, e) };
            out[i * cols + j] = (e + alpha * (fill - e)).clamp(lo, hi);
        }
    }
    d0.replace_values(out)
}

/// How the initial complete surface is produced.
#[derive(Debug, Clone)]
pub enum Filler {
    Extend { radius: usize },
    Idw(IdwParams),
    Spline(SplineParams),
    Neural(Arc<Generator>),
}

impl Filler {
    pub fn name(&self) -> &'static str {
        match self {
            Filler::Extend { .. } => "extend",
            Filler::Idw(_) => "idw",
            Filler::Spline(_) => "spline",
            Filler::Neural(_) => "neural",
        }
    }

    pub fn fill(&self, grid: &DemGrid, mask: &VoidMask) -> Result<DemGrid> {
        match self {
            Filler::Extend { radius } => fill_extend(grid, mask, *radius),
            Filler::Idw(p) => fill_idw(grid, mask, p),
            Filler::Spline(p) => fill_spline(grid, mask, p),
            Filler::Neural(g) => Ok(g.forward(grid, mask)?.refined),
        }
    }
}

/// Runs the filler, then blends the boundary band.
pub fn fill_and_blend(
    d0: &DemGrid,
    mask: &VoidMask,
    filler: &Filler,
    cfg: &BlendConfig,
) -> Result<DemGrid> {
    cfg.validate()?;
    let d = filler.fill(d0, mask)?;
    blend_boundary(d0, &d, mask, cfg)
}
