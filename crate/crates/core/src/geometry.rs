//! Ring partition of the void, window sampling, and synthetic fixtures.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{DemGrid, VoidMask};

/// Unknown pixels grouped by city-block distance to the nearest known pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingPartition {
    rows: usize,
    cols: usize,
    /// `rings[k - 1]` holds ring `k`, row-major.
    rings: Vec<Vec<(usize, usize)>>,
    /// 0 for known pixels, otherwise the ring index.
    labels: Vec<u32>,
}

impl RingPartition {
    /// Number of rings, i.e. the largest distance to a known pixel.
    pub fn len(&self) -> usize {
        self.rings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    /// Pixels of ring `k`, with `k` starting at 1.
    pub fn ring(&self, k: usize) -> &[(usize, usize)] {
        &self.rings[k - 1]
    }

    pub fn rings(&self) -> impl Iterator<Item = (usize, &[(usize, usize)])> {
        self.rings.iter().enumerate().map(|(k, r)| (k + 1, r.as_slice()))
    }

    /// Ring index of a pixel, 0 if known.
    pub fn label(&self, i: usize, j: usize) -> u32 {
        self.labels[i * self.cols + j]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Multi-source BFS over 4-neighbourhoods, seeded from every known pixel.
/// On an obstacle-free grid the BFS depth is exactly the L1 distance.
pub fn ring_partition(mask: &VoidMask) -> Result<RingPartition> {
    let (rows, cols) = mask.shape();
    const UNSET: u32 = u32::MAX;
    let mut labels = vec![UNSET; rows * cols];
    let mut queue = VecDeque::new();
    for (k, &unknown) in mask.bits().iter().enumerate() {
        if !unknown {
            labels[k] = 0;
            queue.push_back(k);
        }
    }
    if queue.is_empty() {
        return Err(Error::NoKnownPixels);
    }
    while let Some(k) = queue.pop_front() {
        let (i, j) = (k / cols, k % cols);
        let next = labels[k] + 1;
        let mut visit = |n: usize| {
            if labels[n] == UNSET {
                labels[n] = next;
                queue.push_back(n);
            }
        };
        if i > 0 {
            visit(k - cols);
        }
        if i + 1 < rows {
            visit(k + cols);
        }
        if j > 0 {
            visit(k - 1);
        }
        if j + 1 < cols {
            visit(k + 1);
        }
    }
    let depth = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut rings = vec![Vec::new(); depth];
    for (k, &l) in labels.iter().enumerate() {
        if l > 0 {
            rings[l as usize - 1].push((k / cols, k % cols));
        }
    }
    Ok(RingPartition {
        rows,
        cols,
        rings,
        labels,
    })
}

/// A known height at window-local offset `(u, v) = (i - p_i, j - p_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub u: i32,
    pub v: i32,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }
}

impl FromIterator<Sample> for SampleSet {
    fn from_iter<I: IntoIterator<Item = Sample>>(iter: I) -> Self {
        Self {
            samples: iter.into_iter().collect(),
        }
    }
}

/// Known pixels of the `(2r+1)²` window centred on `p`, clipped to the grid.
pub fn known_window(grid: &DemGrid, mask: &VoidMask, p: (usize, usize), r: usize) -> SampleSet {
    window_samples(grid.values(), mask.bits(), grid.cols(), grid.rows(), p, r, |b| !b)
}

/// Window sampling over raw state arrays; `is_known` interprets the flag.
pub(crate) fn window_samples<F: Fn(bool) -> bool>(
    values: &[f64],
    flags: &[bool],
    cols: usize,
    rows: usize,
    (pi, pj): (usize, usize),
    r: usize,
    is_known: F,
) -> SampleSet {
    let i0 = pi.saturating_sub(r);
    let i1 = (pi + r).min(rows - 1);
    let j0 = pj.saturating_sub(r);
    let j1 = (pj + r).min(cols - 1);
    let mut samples = Vec::with_capacity((i1 - i0 + 1) * (j1 - j0 + 1));
    for i in i0..=i1 {
        for j in j0..=j1 {
            let k = i * cols + j;
            if is_known(flags[k]) {
                samples.push(Sample {
                    u: i as i32 - pi as i32,
                    v: j as i32 - pj as i32,
                    value: values[k],
                });
            }
        }
    }
    SampleSet { samples }
}

const MASK_RETRIES: usize = 1000;

/// Union of `count` random axis-aligned rectangles with sides drawn uniformly
/// from `size_range`. Rectangles may overlap. Draws are repeated until at
/// least one pixel stays known.
pub fn sample_rect_mask(
    rows: usize,
    cols: usize,
    seed: u64,
    count: usize,
    size_range: (usize, usize),
) -> Result<VoidMask> {
    let (a, b) = size_range;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParam("mask must be non-empty".into()));
    }
    if count == 0 {
        return Ok(VoidMask::all_known(rows, cols));
    }
    if a == 0 || a > b || b > rows.min(cols) {
        return Err(Error::InvalidParam(format!(
            "rectangle sides [{a}, {b}] must satisfy 1 <= a <= b <= {}",
            rows.min(cols)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MASK_RETRIES {
        let mut mask = VoidMask::all_known(rows, cols);
        for _ in 0..count {
            let h = rng.random_range(a..=b);
            let w = rng.random_range(a..=b);
            let top = rng.random_range(0..=rows - h);
            let left = rng.random_range(0..=cols - w);
            for i in top..top + h {
                for j in left..left + w {
                    mask.set_unknown(i, j, true);
                }
            }
        }
        if mask.count_known() > 0 {
            return Ok(mask);
        }
    }
    Err(Error::InvalidParam(format!(
        "no placement of {count} rectangles leaves a known pixel in {MASK_RETRIES} draws"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerrainKind {
    Quadratic,
    GaussianHills,
    Fractal,
}

impl std::str::FromStr for TerrainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "gaussian_hills" | "gaussian-hills" | "hills" => Ok(Self::GaussianHills),
            "fractal" => Ok(Self::Fractal),
            other => Err(Error::InvalidParam(format!("unknown terrain kind `{other}`"))),
        }
    }
}

/// Heights `a i² + b ij + c j² + d i + e j + f` in global pixel indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticSurface {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl QuadraticSurface {
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            a: rng.random_range(-0.05..0.05),
            b: rng.random_range(-0.05..0.05),
            c: rng.random_range(-0.05..0.05),
            d: rng.random_range(-2.0..2.0),
            e: rng.random_range(-2.0..2.0),
            f: rng.random_range(0.0..500.0),
        }
    }

    pub fn height(&self, i: f64, j: f64) -> f64 {
        self.a * i * i + self.b * i * j + self.c * j * j + self.d * i + self.e * j + self.f
    }

    pub fn grid(&self, rows: usize, cols: usize) -> Result<DemGrid> {
        DemGrid::from_fn(rows, cols, |i, j| self.height(i as f64, j as f64))
    }
}

/// Seeded synthetic terrain for tests and desk-scale experiments.
pub fn synth_terrain(rows: usize, cols: usize, seed: u64, kind: TerrainKind) -> Result<DemGrid> {
    if rows < 8 || cols < 8 {
        return Err(Error::InvalidParam(format!(
            "synthetic terrain needs at least 8x8, got {rows}x{cols}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        TerrainKind::Quadratic => QuadraticSurface::random(&mut rng).grid(rows, cols),
        TerrainKind::GaussianHills => gaussian_hills(rows, cols, &mut rng),
        TerrainKind::Fractal => midpoint_displacement(rows, cols, &mut rng),
    }
}

fn gaussian_hills(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DemGrid> {
    let scale = rows.max(cols) as f64;
    let base = rng.random_range(50.0..300.0);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(4..=10))
        .map(|_| {
            (
                rng.random_range(0.0..rows as f64),
                rng.random_range(0.0..cols as f64),
                rng.random_range(scale / 12.0..scale / 3.0),
                rng.random_range(-40.0..120.0),
            )
        })
        .collect();
    DemGrid::from_fn(rows, cols, |i, j| {
        bumps.iter().fold(base, |acc, &(ci, cj, sigma, amp)| {
            let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
            acc + amp * (-d2 / (2.0 * sigma * sigma)).exp()
        })
    })
}

/// Diamond-square on the smallest `2^n + 1` square covering the tile, cropped.
fn midpoint_displacement(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DemGrid> {
    let mut n = 1;
    while n + 1 < rows.max(cols) {
        n *= 2;
    }
    let size = n + 1;
    let mut h = vec![0.0f64; size * size];
    let roughness = 0.55;
    let mut amp = rng.random_range(40.0..120.0);
    let base = rng.random_range(100.0..400.0);
    for &(i, j) in &[(0, 0), (0, n), (n, 0), (n, n)] {
        h[i * size + j] = base + rng.random_range(-amp..amp);
    }
    let mut step = n;
    while step > 1 {
        let half = step / 2;
        amp *= roughness;
        for i in (half..size).step_by(step) {
            for j in (half..size).step_by(step) {
                let avg = (h[(i - half) * size + j - half]
                    + h[(i - half) * size + j + half]
                    + h[(i + half) * size + j - half]
                    + h[(i + half) * size + j + half])
                    / 4.0;
                h[i * size + j] = avg + rng.random_range(-amp..amp);
            }
        }
        for i in (0..size).step_by(half) {
            let start = if (i / half) % 2 == 0 { half } else { 0 };
            for j in (start..size).step_by(step) {
                let mut sum = 0.0;
                let mut cnt = 0.0;
                if i >= half {
                    sum += h[(i - half) * size + j];
                    cnt += 1.0;
                }
                if i + half < size {
                    sum += h[(i + half) * size + j];
                    cnt += 1.0;
                }
                if j >= half {
                    sum += h[i * size + j - half];
                    cnt += 1.0;
                }
                if j + half < size {
                    sum += h[i * size + j + half];
                    cnt += 1.0;
                }
                h[i * size + j] = sum / cnt + rng.random_range(-amp..amp);
            }
        }
        step = half;
    }
    DemGrid::from_fn(rows, cols, |i, j| h[i * size + j])
}
