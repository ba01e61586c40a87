//! Bicubic tensor-product B-spline least-squares fill.
//!
//! Uniform clamped knots along each axis, smoothing by squared second
//! divided differences of the control net taken over the Greville
//! abscissae. Affine surfaces have zero penalty, so smoothing only trades
//! off curvature. The normal equations are solved matrix-free by
//! Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::raster::{DemGrid, VoidMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineParams {
    /// Target knot spacing in pixels; the actual spacing divides the axis evenly.
    pub knot_spacing: usize,
    pub smoothing_weight: f64,
    /// Relative residual at which conjugate gradients stop.
    pub solver_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SplineParams {
    fn default() -> Self {
        Self {
            knot_spacing: 8,
            smoothing_weight: 1e-3,
            solver_tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

/// Clamped uniform cubic knot vector over pixel coordinates `0..len`.
#[derive(Debug, Clone)]
pub(crate) struct Axis {
    pub(crate) knots: Vec<f64>,
    pub(crate) greville: Vec<f64>,
    pub(crate) spacing: f64,
}

impl Axis {
    pub(crate) fn new(len: usize, target_spacing: usize) -> Self {
        let extent = (len.max(2) - 1) as f64;
        let intervals = ((extent / target_spacing as f64).ceil() as usize).max(1);
        let spacing = extent / intervals as f64;
        let mut knots = vec![0.0; 4];
        knots.extend((1..intervals).map(|k| k as f64 * spacing));
        knots.extend([extent; 4]);
        let greville = (0..intervals + 3)
            .map(|k| (knots[k + 1] + knots[k + 2] + knots[k + 3]) / 3.0)
            .collect();
        Self {
            knots,
            greville,
            spacing,
        }
    }

    pub(crate) fn n_basis(&self) -> usize {
        self.knots.len() - 4
    }

    /// Index of the first non-zero basis function at `x` and the four values.
    pub(crate) fn basis(&self, x: f64) -> (usize, [f64; 4]) {
        let n = self.n_basis();
        let mut span = 3;
        while span + 1 < n && self.knots[span + 1] <= x {
            span += 1;
        }
        let t = &self.knots;
        let mut vals = [1.0, 0.0, 0.0, 0.0];
        let mut left = [0.0; 4];
        let mut right = [0.0; 4];
        for j in 1..=3 {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        (span - 3, vals)
    }
}

/// A fitted surface: the spline plus the plane removed before fitting.
#[derive(Debug, Clone)]
pub struct SplineSurface {
    rows: Axis,
    cols: Axis,
    control: Vec<f64>,
    plane: Plane,
}

impl SplineSurface {
    pub fn eval(&self, i: usize, j: usize) -> f64 {
        let (bi, wi) = self.rows.basis(i as f64);
        let (bj, wj) = self.cols.basis(j as f64);
        let nj = self.cols.n_basis();
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                s += wi[a] * wj[b] * self.control[(bi + a) * nj + bj + b];
            }
        }
        s + self.plane.at(i as f64, j as f64)
    }

    pub fn control_points(&self) -> &[f64] {
        &self.control
    }
}

/// `a i + b j + c`. Affine functions lie in the bicubic space and carry no
/// smoothing penalty, so removing one leaves the fitted model unchanged
/// while shrinking the system the solver sees.
#[derive(Debug, Clone, Copy)]
struct Plane {
    a: f64,
    b: f64,
    c: f64,
}

impl Plane {
    fn at(&self, i: f64, j: f64) -> f64 {
        self.a * i + self.b * j + self.c
    }

    /// Least-squares plane through the known pixels; the mean if they are
    /// collinear.
    fn fit(grid: &DemGrid, mask: &VoidMask) -> Self {
        let known: Vec<(f64, f64, f64)> = mask_known(mask)
            .map(|(i, j)| (i as f64, j as f64, grid.get(i, j)))
            .collect();
        let n = known.len() as f64;
        let (mi, mj, mz) = known
            .iter()
            .fold((0.0, 0.0, 0.0), |(a, b, c), &(i, j, z)| (a + i / n, b + j / n, c + z / n));
        let (mut sii, mut sij, mut sjj, mut siz, mut sjz) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(i, j, z) in &known {
            let (di, dj, dz) = (i - mi, j - mj, z - mz);
            sii += di * di;
            sij += di * dj;
            sjj += dj * dj;
            siz += di * dz;
            sjz += dj * dz;
        }
        let det = sii * sjj - sij * sij;
        if !(det > 1e-9 * (sii * sjj).max(f64::MIN_POSITIVE)) {
            return Self { a: 0.0, b: 0.0, c: mz };
        }
        let a = (siz * sjj - sjz * sij) / det;
        let b = (sjz * sii - siz * sij) / det;
        Self { a, b, c: mz - a * mi - b * mj }
    }
}

fn mask_known(mask: &VoidMask) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..mask.rows()).flat_map(move |i| (0..mask.cols()).map(move |j| (i, j))).filter(|&(i, j)| mask.is_known(i, j))
}

struct DataRow {
    base_i: usize,
    base_j: usize,
    wi: [f64; 4],
    wj: [f64; 4],
}

/// Sparse row of the smoothing operator.
type PenaltyRow = Vec<(usize, f64)>;

struct NormalOperator {
    nj: usize,
    data: Vec<DataRow>,
    penalty: Vec<PenaltyRow>,
    weight: f64,
}

impl NormalOperator {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for row in &self.data {
            let mut s = 0.0;
            for a in 0..4 {
                let base = (row.base_i + a) * self.nj + row.base_j;
                for b in 0..4 {
                    s += row.wi[a] * row.wj[b] * x[base + b];
                }
            }
            for a in 0..4 {
                let base = (row.base_i + a) * self.nj + row.base_j;
                for b in 0..4 {
                    out[base + b] += row.wi[a] * row.wj[b] * s;
                }
            }
        }
        if self.weight > 0.0 {
            for row in &self.penalty {
                let s: f64 = row.iter().map(|&(k, c)| c * x[k]).sum();
                for &(k, c) in row {
                    out[k] += self.weight * c * s;
                }
            }
        }
    }

    fn diagonal(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut data_diag = vec![0.0; n];
        for row in &self.data {
            for a in 0..4 {
                let base = (row.base_i + a) * self.nj + row.base_j;
                for b in 0..4 {
                    data_diag[base + b] += (row.wi[a] * row.wj[b]).powi(2);
                }
            }
        }
        let mut diag = data_diag.clone();
        for row in &self.penalty {
            for &(k, c) in row {
                diag[k] += self.weight * c * c;
            }
        }
        (data_diag, diag)
    }
}

/// Second divided differences along each axis plus the mixed difference,
/// scaled by the knot spacing so the weight is unit-free.
fn penalty_rows(rows: &Axis, cols: &Axis) -> Vec<PenaltyRow> {
    let (ni, nj) = (rows.n_basis(), cols.n_basis());
    let idx = |a: usize, b: usize| a * nj + b;
    let second = |g: &[f64], k: usize, h: f64| -> [f64; 3] {
        let d0 = g[k] - g[k - 1];
        let d1 = g[k + 1] - g[k];
        let mid = 0.5 * (g[k + 1] - g[k - 1]);
        let s = h * h / mid;
        [s / d0, -s * (1.0 / d0 + 1.0 / d1), s / d1]
    };
    let mut out = Vec::new();
    for b in 0..nj {
        for k in 1..ni - 1 {
            let c = second(&rows.greville, k, rows.spacing);
            out.push(vec![(idx(k - 1, b), c[0]), (idx(k, b), c[1]), (idx(k + 1, b), c[2])]);
        }
    }
    for a in 0..ni {
        for k in 1..nj - 1 {
            let c = second(&cols.greville, k, cols.spacing);
            out.push(vec![(idx(a, k - 1), c[0]), (idx(a, k), c[1]), (idx(a, k + 1), c[2])]);
        }
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    for a in 0..ni - 1 {
        let di = rows.greville[a + 1] - rows.greville[a];
        for b in 0..nj - 1 {
            let dj = cols.greville[b + 1] - cols.greville[b];
            let c = sqrt2 * rows.spacing * cols.spacing / (di * dj);
            out.push(vec![
                (idx(a, b), c),
                (idx(a, b + 1), -c),
                (idx(a + 1, b), -c),
                (idx(a + 1, b + 1), c),
            ]);
        }
    }
    out
}

fn validate(params: &SplineParams) -> Result<()> {
    if params.knot_spacing < 2 {
        return Err(Error::InvalidParam("knot spacing must be at least 2".into()));
    }
    if !(params.smoothing_weight >= 0.0) || !params.smoothing_weight.is_finite() {
        return Err(Error::InvalidParam("smoothing weight must be >= 0".into()));
    }
    if !(params.solver_tolerance > 0.0) {
        return Err(Error::InvalidParam("solver tolerance must be > 0".into()));
    }
    Ok(())
}

fn has_three_non_collinear(mask: &VoidMask) -> bool {
    let mut known = (0..mask.rows())
        .flat_map(|i| (0..mask.cols()).map(move |j| (i as i64, j as i64)))
        .filter(|&(i, j)| mask.is_known(i as usize, j as usize));
    let Some(p0) = known.next() else { return false };
    let Some(p1) = known.next() else { return false };
    known.any(|p| (p1.0 - p0.0) * (p.1 - p0.1) - (p1.1 - p0.1) * (p.0 - p0.0) != 0)
}

/// Fits the spline to all known pixels.
pub fn fit_spline(grid: &DemGrid, mask: &VoidMask, params: &SplineParams) -> Result<SplineSurface> {
    grid.check_shape(mask)?;
    validate(params)?;
    let n_known = mask.count_known();
    if n_known == 0 {
        return Err(Error::NoKnownPixels);
    }
    let rows = Axis::new(grid.rows(), params.knot_spacing);
    let cols = Axis::new(grid.cols(), params.knot_spacing);
    let (ni, nj) = (rows.n_basis(), cols.n_basis());
    let n = ni * nj;

    let row_basis: Vec<_> = (0..grid.rows()).map(|i| rows.basis(i as f64)).collect();
    let col_basis: Vec<_> = (0..grid.cols()).map(|j| cols.basis(j as f64)).collect();

    let plane = Plane::fit(grid, mask);

    let mut data = Vec::with_capacity(n_known);
    let mut rhs = vec![0.0; n];
    for i in 0..grid.rows() {
        for j in 0..grid.cols() {
            if mask.is_unknown(i, j) {
                continue;
            }
            let (base_i, wi) = row_basis[i];
            let (base_j, wj) = col_basis[j];
            let y = grid.get(i, j) - plane.at(i as f64, j as f64);
            for a in 0..4 {
                for b in 0..4 {
                    rhs[(base_i + a) * nj + base_j + b] += wi[a] * wj[b] * y;
                }
            }
            data.push(DataRow {
                base_i,
                base_j,
                wi,
                wj,
            });
        }
    }

    let op = NormalOperator {
        nj,
        data,
        penalty: if params.smoothing_weight > 0.0 {
            penalty_rows(&rows, &cols)
        } else {
            Vec::new()
        },
        weight: params.smoothing_weight,
    };
    let (data_diag, diag) = op.diagonal(n);
    if params.smoothing_weight == 0.0 {
        if let Some(k) = data_diag.iter().position(|&d| d == 0.0) {
            return Err(Error::Conditioning(format!(
                "control point ({}, {}) has no data support; use smoothing or wider knot spacing",
                k / nj,
                k % nj
            )));
        }
    } else if !has_three_non_collinear(mask) {
        return Err(Error::Conditioning(
            "known pixels are collinear; the affine part is undetermined".into(),
        ));
    }

    let control = conjugate_gradients(&op, &rhs, &diag, params)?;
    Ok(SplineSurface {
        rows,
        cols,
        control,
        plane,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_gradients(
    op: &NormalOperator,
    b: &[f64],
    diag: &[f64],
    params: &SplineParams,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = 1.0;
    for _ in 0..params.max_iterations {
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= params.solver_tolerance {
            return Ok(x);
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..n {
            z[k] = r[k] * inv[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    residual = residual.min(dot(&r, &r).sqrt() / b_norm);
    if residual <= params.solver_tolerance {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        iterations: params.max_iterations,
        residual,
    })
}

/// Evaluates the fitted spline at unknown pixels; known pixels pass through.
pub fn fill_spline(grid: &DemGrid, mask: &VoidMask, params: &SplineParams) -> Result<DemGrid> {
    let surface = fit_spline(grid, mask, params)?;
    let mut out = grid.values().to_vec();
    for (i, j) in mask.unknown_pixels() {
        out[i * grid.cols() + j] = surface.eval(i, j);
    }
    grid.replace_values(out)
}
