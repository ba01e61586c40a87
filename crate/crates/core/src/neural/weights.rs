//! Named parameter tensors and the DEMW binary format.
//!
//! Layout, all integers little-endian: magic `DEMW`, version `u32`, tensor
//! count `u32`, then per tensor a `u16` name length, the UTF-8 name, a `u8`
//! rank, `rank` dims as `u32`, and the `f32` data.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::NetworkSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DEMW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn zeros(name: impl Into<String>, dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self {
            name: name.into(),
            dims,
            data: vec![0.0; len],
        }
    }
}

/// Ordered parameter tensors, one per spec slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    tensors: Vec<NamedTensor>,
}

impl WeightStore {
    pub fn new(tensors: Vec<NamedTensor>) -> Self {
        Self { tensors }
    }

    /// All parameters zero.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self::new(
            spec.slots()
                .into_iter()
                .map(|(name, dims)| NamedTensor::zeros(name, dims))
                .collect(),
        )
    }

    /// He-uniform weights, zero biases, drawn in slot order.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(
            spec.slots()
                .into_iter()
                .map(|(name, dims)| {
                    let mut t = NamedTensor::zeros(name, dims);
                    if t.dims.len() == 4 {
                        let fan_in = (t.dims[1] * t.dims[2] * t.dims[3]) as f64;
                        let bound = (6.0 / fan_in).sqrt();
                        for v in &mut t.data {
                            *v = rng.random_range(-bound..bound) as f32;
                        }
                    }
                    t
                })
                .collect(),
        )
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NamedTensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub(crate) fn require(&self, name: &str) -> Result<&NamedTensor> {
        self.get(name)
            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
    }

    /// Checks names, order and shapes against the spec's slot table.
    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let slots = spec.slots();
        if slots.len() != self.tensors.len() {
            return Err(Error::Weights(format!(
                "spec has {} parameter tensors, store has {}",
                slots.len(),
                self.tensors.len()
            )));
        }
        for ((name, dims), t) in slots.iter().zip(&self.tensors) {
            if *name != t.name || *dims != t.dims {
                return Err(Error::Weights(format!(
                    "expected `{name}` {dims:?}, found `{}` {:?}",
                    t.name, t.dims
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a DEMW stream without reference to a spec.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Weights("bad magic, not a DEMW file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Weights(format!("unsupported DEMW version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Weights("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= (bytes.len() - r.pos) / 4)
                .ok_or_else(|| Error::Weights(format!("tensor `{name}` overruns the stream")))?;
            let data = r
                .take(4 * len)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Weights(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { tensors })
    }

    /// Parses and validates against `spec`; nothing is returned on failure.
    pub fn load(bytes: &[u8], spec: &NetworkSpec) -> Result<Self> {
        let store = Self::from_bytes(bytes)?;
        store.check(spec)?;
        Ok(store)
    }

    pub fn load_file(path: impl AsRef<Path>, spec: &NetworkSpec) -> Result<Self> {
        Self::load(&std::fs::read(path)?, spec)
    }

    pub fn save_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Weights(format!("truncated stream at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_weights(w: &WeightStore) -> Vec<u8> {
    w.to_bytes()
}

pub fn load_weights(bytes: &[u8], spec: &NetworkSpec) -> Result<WeightStore> {
    WeightStore::load(bytes, spec)
}
