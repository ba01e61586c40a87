//! Windowed least-squares paraboloids.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::SampleSet;

/// Largest accepted condition number of the Jacobi-scaled normal matrix.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Degree {
    Constant,
    Affine,
    Quadratic,
}

/// `f(u, v) = a u² + b uv + c v² + d u + e v + f` in window-local
/// coordinates, `u` along rows and `v` along columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Paraboloid {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub degree: Degree,
}

impl Paraboloid {
    pub fn constant(f: f64) -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            e: 0.0,
            f,
            degree: Degree::Constant,
        }
    }

    pub fn coefficients(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        self.a * u * u + self.b * u * v + self.c * v * v + self.d * u + self.e * v + self.f
    }

    /// Sum of squared residuals over a sample set.
    pub fn residual(&self, samples: &SampleSet) -> f64 {
        samples
            .iter()
            .map(|s| (self.eval(s.u as f64, s.v as f64) - s.value).powi(2))
            .sum()
    }
}

pub fn eval_paraboloid(p: &Paraboloid, u: f64, v: f64) -> f64 {
    p.eval(u, v)
}

fn quadratic_basis(u: f64, v: f64) -> [f64; 6] {
    [u * u, u * v, v * v, u, v, 1.0]
}

fn affine_basis(u: f64, v: f64) -> [f64; 6] {
    [u, v, 1.0, 0.0, 0.0, 0.0]
}

/// Least-squares fit, falling back from quadratic to affine to constant when
/// there are too few samples or the normal matrix is ill-conditioned.
pub fn fit_paraboloid(samples: &SampleSet) -> Result<Paraboloid> {
    if samples.is_empty() {
        return Err(Error::InvalidParam("cannot fit a paraboloid to no samples".into()));
    }
    let n = samples.len() as f64;
    // Heights are centred so the normal equations see O(relief) magnitudes;
    // the shift is absorbed by the constant term.
    let mean = samples.iter().map(|s| s.value).sum::<f64>() / n;

    if samples.len() >= 6 {
        if let Some(x) = solve_normal(samples, 6, mean, quadratic_basis) {
            return Ok(Paraboloid {
                a: x[0],
                b: x[1],
                c: x[2],
                d: x[3],
                e: x[4],
                f: x[5] + mean,
                degree: Degree::Quadratic,
            });
        }
    }
    if samples.len() >= 3 {
        if let Some(x) = solve_normal(samples, 3, mean, affine_basis) {
            return Ok(Paraboloid {
                a: 0.0,
                b: 0.0,
                c: 0.0,
                d: x[0],
                e: x[1],
                f: x[2] + mean,
                degree: Degree::Affine,
            });
        }
    }
    Ok(Paraboloid::constant(mean))
}

/// Assembles and solves the `dim × dim` normal equations. Returns `None`
/// when the scaled matrix is singular or its condition exceeds
/// [`MAX_CONDITION`].
fn solve_normal(
    samples: &SampleSet,
    dim: usize,
    shift: f64,
    basis: fn(f64, f64) -> [f64; 6],
) -> Option<[f64; 6]> {
    let mut ata = [[0.0f64; 6]; 6];
    let mut atb = [0.0f64; 6];
    for s in samples.iter() {
        let phi = basis(s.u as f64, s.v as f64);
        let y = s.value - shift;
        for r in 0..dim {
            atb[r] += phi[r] * y;
            for c in r..dim {
                ata[r][c] += phi[r] * phi[c];
            }
        }
    }
    for r in 0..dim {
        for c in 0..r {
            ata[r][c] = ata[c][r];
        }
    }

    let mut scale = [0.0f64; 6];
    for k in 0..dim {
        if ata[k][k] <= 0.0 {
            return None;
        }
        scale[k] = ata[k][k].sqrt();
    }
    let scaled = DMatrix::from_fn(dim, dim, |r, c| ata[r][c] / (scale[r] * scale[c]));
    let eig = SymmetricEigen::new(scaled.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return None;
    }

    let mut m = [[0.0f64; 6]; 6];
    let mut rhs = [0.0f64; 6];
    for r in 0..dim {
        rhs[r] = atb[r] / scale[r];
        for c in 0..dim {
            m[r][c] = scaled[(r, c)];
        }
    }
    let y = cholesky_solve(&mut m, &rhs, dim)?;
    let mut x = [0.0f64; 6];
    for k in 0..dim {
        x[k] = y[k] / scale[k];
    }
    Some(x)
}

/// In-place Cholesky factorisation and solve of a small SPD system.
fn cholesky_solve(m: &mut [[f64; 6]; 6], rhs: &[f64; 6], n: usize) -> Option<[f64; 6]> {
    for j in 0..n {
        let mut d = m[j][j];
        for k in 0..j {
            d -= m[j][k] * m[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        m[j][j] = d;
        for i in j + 1..n {
            let mut s = m[i][j];
            for k in 0..j {
                s -= m[i][k] * m[j][k];
            }
            m[i][j] = s / d;
        }
    }
    let mut y = [0.0f64; 6];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= m[i][k] * y[k];
        }
        y[i] = s / m[i][i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= m[k][i] * y[k];
        }
        y[i] = s / m[i][i];
    }
    Some(y)
}
