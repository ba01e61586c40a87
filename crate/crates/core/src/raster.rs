//! Elevation grids, void masks and the ASCII grid exchange format.
//!
//! The text format is one tile per file:
//!
//! ```text
//! ncols 3
//! nrows 2
//! xllcorner 0
//! yllcorner 0
//! cellsize 1
//! NODATA_value -9999
//! 1 2 3
//! 4 -9999 6
//! ```
//!
//! Keys are case-insensitive, rows are listed top row first, and a value
//! equal to the nodata sentinel marks an unknown pixel.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Georeferencing carried through I/O. Algorithms work purely in pixel
/// coordinates and never read it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRef {
    pub cell_size: f64,
    pub origin: (f64, f64),
}

impl Default for GeoRef {
    fn default() -> Self {
        Self {
            cell_size: 1.0,
            origin: (0.0, 0.0),
        }
    }
}

/// A rectangular grid of heights in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DemGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    nodata: f64,
    georef: GeoRef,
}

impl DemGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_nodata(rows, cols, values, DEFAULT_NODATA)
    }

    pub fn with_nodata(rows: usize, cols: usize, values: Vec<f64>, nodata: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("grid must be non-empty, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} grid needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if !nodata.is_finite() {
            return Err(Error::InvalidParam("nodata sentinel must be finite".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite height at ({}, {})",
                k / cols,
                k % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            nodata,
            georef: GeoRef::default(),
        })
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn with_georef(mut self, georef: GeoRef) -> Self {
        self.georef = georef;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn georef(&self) -> GeoRef {
        self.georef
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Writes a height. Callers keep values finite.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(v.is_finite());
        self.values[i * self.cols + j] = v;
    }

    /// Same georeferencing and sentinel, new values.
    pub fn replace_values(&self, values: Vec<f64>) -> Result<Self> {
        Ok(Self::with_nodata(self.rows, self.cols, values, self.nodata)?.with_georef(self.georef))
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
            nodata: self.nodata,
            georef: self.georef,
        }
    }

    /// Mask of pixels whose value equals the nodata sentinel exactly.
    pub fn nodata_mask(&self) -> VoidMask {
        VoidMask {
            rows: self.rows,
            cols: self.cols,
            bits: self.values.iter().map(|&v| v == self.nodata).collect(),
        }
    }

    pub fn check_shape(&self, mask: &VoidMask) -> Result<()> {
        if self.shape() != mask.shape() {
            return Err(Error::Shape(format!(
                "grid is {}x{} but mask is {}x{}",
                self.rows, self.cols, mask.rows, mask.cols
            )));
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &DemGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "grids are {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Binary grid; `true` marks an unknown pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoidMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl VoidMask {
    pub fn all_known(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn all_unknown(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || bits.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} mask needs {} bits, got {}",
                rows * cols,
                bits.len()
            )));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                bits.push(f(i, j));
            }
        }
        Self { rows, cols, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_unknown(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn is_known(&self, i: usize, j: usize) -> bool {
        !self.is_unknown(i, j)
    }

    pub fn set_unknown(&mut self, i: usize, j: usize, unknown: bool) {
        self.bits[i * self.cols + j] = unknown;
    }

    pub fn count_unknown(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn count_known(&self) -> usize {
        self.bits.len() - self.count_unknown()
    }

    pub fn union(&self, other: &VoidMask) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape("masks differ in shape".into()));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.is_unknown(j, i))
    }

    /// Row-major coordinates of unknown pixels.
    pub fn unknown_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / cols, k % cols))
    }
}

/// Affine map from heights to the network's working range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mid: f64,
    pub half_range: f64,
}

impl Normalization {
    pub const MIN_HALF_RANGE: f64 = 1e-6;

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mid) / self.half_range
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        v * self.half_range + self.mid
    }
}

/// Scales known heights into `[-1, 1]` from their own range; unknown pixels
/// become 0.
pub fn normalize(grid: &DemGrid, mask: &VoidMask) -> Result<(DemGrid, Normalization)> {
    grid.check_shape(mask)?;
    let (lo, hi) = grid
        .values
        .iter()
        .zip(&mask.bits)
        .filter(|(_, &m)| !m)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
            (lo.min(v), hi.max(v))
        });
    if lo > hi {
        return Err(Error::NoKnownPixels);
    }
    let norm = Normalization {
        mid: 0.5 * (lo + hi),
        half_range: (0.5 * (hi - lo)).max(Normalization::MIN_HALF_RANGE),
    };
    let values = grid
        .values
        .iter()
        .zip(&mask.bits)
        .map(|(&v, &m)| if m { 0.0 } else { norm.apply(v) })
        .collect();
    Ok((grid.replace_values(values)?, norm))
}

struct Header {
    ncols: usize,
    nrows: usize,
    georef: GeoRef,
    nodata: f64,
}

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

fn parse_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<Header> {
    let mut fields = [0.0f64; 6];
    let mut raw = [""; 6];
    for (slot, key) in HEADER_KEYS.iter().enumerate() {
        let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
            line: slot + 1,
            msg: format!("missing header line `{key}`"),
        })?;
        let mut toks = line.split_whitespace();
        let (k, v) = match (toks.next(), toks.next(), toks.next()) {
            (Some(k), Some(v), None) => (k, v),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected `{key} <value>`"),
                })
            }
        };
        if !k.eq_ignore_ascii_case(key) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected header key `{key}`, found `{k}`"),
            });
        }
        fields[slot] = v.parse::<f64>().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("non-numeric value `{v}` for `{key}`"),
        })?;
        raw[slot] = v;
    }
    let count = |slot: usize, line: usize| -> Result<usize> {
        raw[slot]
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("`{}` must be a positive integer", HEADER_KEYS[slot]),
            })
    };
    let header = Header {
        ncols: count(0, 1)?,
        nrows: count(1, 2)?,
        georef: GeoRef {
            cell_size: fields[4],
            origin: (fields[2], fields[3]),
        },
        nodata: fields[5],
    };
    if !header.nodata.is_finite() {
        return Err(Error::Parse {
            line: 6,
            msg: "nodata value must be finite".into(),
        });
    }
    Ok(header)
}

fn parse_body<'a>(
    header: &Header,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(header.nrows * header.ncols);
    let mut last_line = 6;
    for row in 0..header.nrows {
        let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
            line: last_line + 1,
            msg: format!("expected {} data rows, found {row}", header.nrows),
        })?;
        last_line = lineno;
        let before = values.len();
        for tok in line.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-numeric token `{tok}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite value `{tok}`"),
                });
            }
            values.push(v);
        }
        let n = values.len() - before;
        if n != header.ncols {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} values, found {n}", header.ncols),
            });
        }
    }
    if let Some((lineno, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("data beyond the {} declared rows", header.nrows),
        });
    }
    Ok(values)
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(k, l)| (k + 1, l))
}

/// Parses an ASCII grid. The mask marks exactly the cells equal to the
/// declared nodata value.
pub fn read_asc(text: &str) -> Result<(DemGrid, VoidMask)> {
    let mut lines = numbered_lines(text);
    let header = parse_header(&mut lines)?;
    let values = parse_body(&header, &mut lines)?;
    let grid = DemGrid::with_nodata(header.nrows, header.ncols, values, header.nodata)?
        .with_georef(header.georef);
    let mask = grid.nodata_mask();
    Ok((grid, mask))
}

/// Parses a sidecar mask file: same format, every value 0 (known) or 1
/// (unknown).
pub fn read_mask_asc(text: &str) -> Result<VoidMask> {
    let mut lines = numbered_lines(text);
    let header = parse_header(&mut lines)?;
    let values = parse_body(&header, &mut lines)?;
    let bits = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::Parse {
                    line: 7 + k / header.ncols,
                    msg: format!("mask values must be 0 or 1, found {v}"),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    VoidMask::from_bits(header.nrows, header.ncols, bits)
}

fn write_header(out: &mut String, rows: usize, cols: usize, georef: GeoRef, nodata: f64) {
    let _ = writeln!(out, "ncols {cols}");
    let _ = writeln!(out, "nrows {rows}");
    let _ = writeln!(out, "xllcorner {:?}", georef.origin.0);
    let _ = writeln!(out, "yllcorner {:?}", georef.origin.1);
    let _ = writeln!(out, "cellsize {:?}", georef.cell_size);
    let _ = writeln!(out, "NODATA_value {:?}", nodata);
}

/// Serializes heights with the shortest representation that parses back to
/// the same `f64`. Unknown pixels are written as the nodata sentinel.
pub fn write_asc(grid: &DemGrid, mask: &VoidMask) -> Result<String> {
    grid.check_shape(mask)?;
    let mut out = String::with_capacity(grid.len() * 12 + 128);
    write_header(&mut out, grid.rows, grid.cols, grid.georef, grid.nodata);
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            if j > 0 {
                out.push(' ');
            }
            let v = if mask.is_unknown(i, j) {
                grid.nodata
            } else {
                let v = grid.get(i, j);
                if v == grid.nodata {
                    return Err(Error::InvalidParam(format!(
                        "known pixel ({i}, {j}) holds the nodata sentinel"
                    )));
                }
                v
            };
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_mask_asc(mask: &VoidMask, georef: GeoRef) -> String {
    let mut out = String::with_capacity(mask.bits.len() * 2 + 128);
    write_header(&mut out, mask.rows, mask.cols, georef, DEFAULT_NODATA);
    for i in 0..mask.rows {
        for j in 0..mask.cols {
            if j > 0 {
                out.push(' ');
            }
            out.push(if mask.is_unknown(i, j) { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

pub fn load_asc(path: impl AsRef<Path>) -> Result<(DemGrid, VoidMask)> {
    read_asc(&std::fs::read_to_string(path)?)
}

pub fn load_mask_asc(path: impl AsRef<Path>) -> Result<VoidMask> {
    read_mask_asc(&std::fs::read_to_string(path)?)
}

pub fn save_asc(path: impl AsRef<Path>, grid: &DemGrid, mask: &VoidMask) -> Result<()> {
    std::fs::write(path, write_asc(grid, mask)?)?;
    Ok(())
}
