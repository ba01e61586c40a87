//! Error metrics over the void: mean squared error and the earth mover's
//! distance between height histograms.

use crate::error::{Error, Result};
use crate::raster::{DemGrid, VoidMask};

pub const DEFAULT_BINS: usize = 256;

fn void_pairs<'a>(pred: &'a DemGrid, truth: &'a DemGrid, mask: &'a VoidMask) -> Result<Vec<(f64, f64)>> {
    pred.check_shape(mask)?;
    truth.check_shape(mask)?;
    if mask.count_unknown() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(mask
        .unknown_pixels()
        .map(|(i, j)| (pred.get(i, j), truth.get(i, j)))
        .collect())
}

/// Mean of `(pred - truth)^2` over unknown pixels.
pub fn mse(pred: &DemGrid, truth: &DemGrid, mask: &VoidMask) -> Result<f64> {
    let pairs = void_pairs(pred, truth, mask)?;
    Ok(pairs.iter().map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pairs.len() as f64)
}

/// Two unit-mass histograms over a shared binning.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPair {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub masses_a: Vec<f64>,
    pub masses_b: Vec<f64>,
}

impl HistogramPair {
    /// Builds both histograms over `[min, max]` of the union of the samples.
    pub fn new(a: &[f64], b: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParam("histogram needs at least one bin".into()));
        }
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyMask);
        }
        let (lo, hi) = a
            .iter()
            .chain(b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let width = (hi - lo) / bins as f64;
        let masses = |vals: &[f64]| {
            let mut m = vec![0.0; bins];
            let unit = 1.0 / vals.len() as f64;
            for &v in vals {
                let k = if width > 0.0 {
                    (((v - lo) / width) as usize).min(bins - 1)
                } else {
                    0
                };
                m[k] += unit;
            }
            m
        };
        Ok(Self {
            bins,
            lo,
            hi,
            masses_a: masses(a),
            masses_b: masses(b),
        })
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    /// Wasserstein-1 distance between the binned distributions.
    pub fn em(&self) -> f64 {
        em_masses(&self.masses_a, &self.masses_b, self.bin_width())
    }
}

/// `sum |CDF_a - CDF_b| * width` for two mass vectors on the same bins.
pub fn em_masses(a: &[f64], b: &[f64], width: f64) -> f64 {
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        ca += x;
        cb += y;
        total += (ca - cb).abs();
    }
    total * width
}

/// Earth mover's distance between the height histograms of `pred` and
/// `truth` over the void. A degenerate (single-value) range gives 0.
pub fn em_histogram(pred: &DemGrid, truth: &DemGrid, mask: &VoidMask, bins: usize) -> Result<f64> {
    let pairs = void_pairs(pred, truth, mask)?;
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(HistogramPair::new(&a, &b, bins)?.em())
}
