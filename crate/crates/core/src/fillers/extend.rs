//! Ring-by-ring paraboloid extension of the known surface into the void.

use rayon::prelude::*;

use super::paraboloid::{fit_paraboloid, Degree};
use crate::error::{Error, Result};
use crate::geometry::{ring_partition, window_samples};
use crate::raster::{DemGrid, VoidMask};

/// Evolving state of the extension: heights plus which pixels count as
/// known. Each ring is fitted against the state frozen at the start of the
/// ring, then committed as a whole.
pub(crate) struct RingExtender {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    known: Vec<bool>,
    radius: usize,
}

impl RingExtender {
    pub(crate) fn new(grid: &DemGrid, mask: &VoidMask, radius: usize) -> Result<Self> {
        grid.check_shape(mask)?;
        if radius == 0 {
            return Err(Error::InvalidParam("fit radius must be at least 1".into()));
        }
        Ok(Self {
            rows: grid.rows(),
            cols: grid.cols(),
            values: grid.values().to_vec(),
            known: mask.bits().iter().map(|&b| !b).collect(),
            radius,
        })
    }

    /// Fit value at `p`. The window doubles while it is empty or too
    /// degenerate for a quadratic (e.g. a single known row). If no window up
    /// to the whole grid supports one, the fit of the smallest non-empty
    /// window is used.
    fn extension_value(&self, p: (usize, usize)) -> Result<f64> {
        let span = self.rows.max(self.cols);
        let mut r = self.radius;
        let mut first = None;
        loop {
            let samples =
                window_samples(&self.values, &self.known, self.cols, self.rows, p, r, |k| k);
            if !samples.is_empty() {
                let fit = fit_paraboloid(&samples)?;
                if fit.degree == Degree::Quadratic {
                    return Ok(fit.f);
                }
                first.get_or_insert(fit.f);
            }
            if r >= span {
                return first.ok_or(Error::NoKnownPixels);
            }
            r *= 2;
        }
    }

    /// Fits every pixel of the ring against the frozen state, commits the
    /// values, and returns them in ring order.
    pub(crate) fn extend_ring(&mut self, ring: &[(usize, usize)]) -> Result<Vec<f64>> {
        let this = &*self;
        let fitted = ring
            .par_iter()
            .map(|&p| this.extension_value(p))
            .collect::<Result<Vec<f64>>>()?;
        for (&(i, j), &v) in ring.iter().zip(&fitted) {
            let k = i * self.cols + j;
            self.values[k] = v;
            self.known[k] = true;
        }
        Ok(fitted)
    }

    pub(crate) fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Fills the whole void with the smooth extension of the known surface.
pub fn fill_extend(grid: &DemGrid, mask: &VoidMask, radius: usize) -> Result<DemGrid> {
    grid.check_shape(mask)?;
    let partition = ring_partition(mask)?;
    let mut ext = RingExtender::new(grid, mask, radius)?;
    for (_, ring) in partition.rings() {
        ext.extend_ring(ring)?;
    }
    grid.replace_values(ext.into_values())
}
