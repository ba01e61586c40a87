use std::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};

/// Element type of feature maps. Network weights and activations are `f32`;
/// `f64` instances exist for gradient checking.
pub trait Real: Float + Debug + Default + Send + Sync + 'static {
    fn cast(x: f64) -> Self;
    fn widen(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn cast(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn cast(x: f64) -> Self {
        x
    }
    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

/// Dense NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "tensor {dims:?} needs {} elements, got {}",
                dims.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    /// One `H × W` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::cast(v.widen())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channel-wise concatenation.
    pub fn concat(parts: &[&Tensor4<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let [n, _, h, w] = first.dims;
        if parts.iter().any(|p| p.dims[0] != n || p.dims[2] != h || p.dims[3] != w) {
            return Err(Error::Shape(format!(
                "concat needs equal batch and spatial dims, got {:?}",
                parts.iter().map(|p| p.dims).collect::<Vec<_>>()
            )));
        }
        let c: usize = parts.iter().map(|p| p.dims[1]).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for p in parts {
                let chunk = p.dims[1] * h * w;
                data.extend_from_slice(&p.data[b * chunk..(b + 1) * chunk]);
            }
        }
        Ok(Self {
            dims: [n, c, h, w],
            data,
        })
    }
}
