//! Method comparison over a set of complete tiles.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::metrics::{em_histogram, mse, DEFAULT_BINS};
use crate::blend::{fill_and_blend, BlendConfig, Filler};
use crate::error::{Error, Result};
use crate::fillers::{IdwParams, SplineParams, DEFAULT_FIT_RADIUS};
use crate::geometry::sample_rect_mask;
use crate::neural::Generator;
use crate::raster::{load_asc, load_mask_asc, DemGrid, VoidMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKind {
    Extend,
    Idw,
    Spline,
    Neural,
}

/// A fill method, optionally followed by boundary blending (`idw+blend`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Method {
    pub kind: MethodKind,
    pub blend: bool,
}

impl Method {
    pub fn name(&self) -> String {
        let base = match self.kind {
            MethodKind::Extend => "extend",
            MethodKind::Idw => "idw",
            MethodKind::Spline => "spline",
            MethodKind::Neural => "neural",
        };
        if self.blend {
            format!("{base}+blend")
        } else {
            base.to_string()
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (base, blend) = match lower.strip_suffix("+blend") {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let kind = match base {
            "extend" => MethodKind::Extend,
            "idw" => MethodKind::Idw,
            "spline" => MethodKind::Spline,
            "neural" => MethodKind::Neural,
            other => return Err(Error::InvalidParam(format!("unknown method `{other}`"))),
        };
        Ok(Self { kind, blend })
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(Error::InvalidParam("no methods given".into()));
    }
    Ok(methods)
}

/// A complete ground-truth tile, with an optional fixed void.
#[derive(Debug, Clone)]
pub struct Tile {
    pub id: String,
    pub truth: DemGrid,
    pub mask: Option<VoidMask>,
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub methods: Vec<Method>,
    /// Tile `k` without a mask file gets a sampled void with seed
    /// `mask_seed + k`.
    pub mask_seed: u64,
    pub rects: usize,
    pub rect_size: (usize, usize),
    pub fit_radius: usize,
    pub idw: IdwParams,
    pub spline: SplineParams,
    pub blend: BlendConfig,
    pub generator: Option<Arc<Generator>>,
    pub bins: usize,
    /// Record wall time; off gives byte-identical CSV across runs.
    pub timing: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                Method { kind: MethodKind::Extend, blend: false },
                Method { kind: MethodKind::Idw, blend: false },
                Method { kind: MethodKind::Spline, blend: false },
            ],
            mask_seed: 0,
            rects: 2,
            rect_size: (4, 16),
            fit_radius: DEFAULT_FIT_RADIUS,
            idw: IdwParams::default(),
            spline: SplineParams::default(),
            blend: BlendConfig::default(),
            generator: None,
            bins: DEFAULT_BINS,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub method: String,
    pub tile: String,
    /// Mask seed, absent when the mask came from a file.
    pub seed: Option<u64>,
    pub mse: f64,
    pub em: f64,
    pub wall_time: Option<f64>,
    pub outcome: Outcome,
}

fn filler_for(method: Method, cfg: &CompareConfig) -> Result<Filler> {
    Ok(match method.kind {
        MethodKind::Extend => Filler::Extend { radius: cfg.fit_radius },
        MethodKind::Idw => Filler::Idw(cfg.idw),
        MethodKind::Spline => Filler::Spline(cfg.spline),
        MethodKind::Neural => Filler::Neural(
            cfg.generator
                .clone()
                .ok_or_else(|| Error::InvalidParam("neural method needs network weights".into()))?,
        ),
    })
}

fn run_one(method: Method, d0: &DemGrid, truth: &DemGrid, mask: &VoidMask, cfg: &CompareConfig) -> Result<(f64, f64)> {
    let filler = filler_for(method, cfg)?;
    let filled = if method.blend {
        fill_and_blend(d0, mask, &filler, &cfg.blend)?
    } else {
        filler.fill(d0, mask)?
    };
    Ok((mse(&filled, truth, mask)?, em_histogram(&filled, truth, mask, cfg.bins)?))
}

/// Runs every method on every tile. Per-method failures are recorded in the
/// row and do not stop the run. Rows come back sorted by (tile, method).
pub fn run_comparison(tiles: &[Tile], cfg: &CompareConfig) -> Result<Vec<EvalRecord>> {
    if cfg.methods.is_empty() {
        return Err(Error::InvalidParam("no methods given".into()));
    }
    for t in tiles {
        if t.truth.values().iter().any(|&v| v == t.truth.nodata()) {
            return Err(Error::Shape(format!("tile `{}` is not complete", t.id)));
        }
    }
    let per_tile = tiles
        .par_iter()
        .enumerate()
        .map(|(k, tile)| -> Result<Vec<EvalRecord>> {
            let (rows, cols) = tile.truth.shape();
            let (mask, seed) = match &tile.mask {
                Some(m) => {
                    tile.truth.check_shape(m)?;
                    (m.clone(), None)
                }
                None => {
                    let seed = cfg.mask_seed + k as u64;
                    (sample_rect_mask(rows, cols, seed, cfg.rects, cfg.rect_size)?, Some(seed))
                }
            };
            let nodata = tile.truth.nodata();
            let d0 = tile.truth.replace_values(
                tile.truth
                    .values()
                    .iter()
                    .zip(mask.bits())
                    .map(|(&v, &m)| if m { nodata } else { v })
                    .collect(),
            )?;
            Ok(cfg
                .methods
                .iter()
                .map(|&method| {
                    let start = Instant::now();
                    let res = run_one(method, &d0, &tile.truth, &mask, cfg);
                    let elapsed = start.elapsed().as_secs_f64();
                    let (mse, em, outcome) = match res {
                        Ok((a, b)) => (a, b, Outcome::Ok),
                        Err(e) => (f64::NAN, f64::NAN, Outcome::Failed(e.to_string())),
                    };
                    EvalRecord {
                        method: method.name(),
                        tile: tile.id.clone(),
                        seed,
                        mse,
                        em,
                        wall_time: cfg.timing.then_some(elapsed),
                        outcome,
                    }
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<EvalRecord> = per_tile.into_iter().flatten().collect();
    records.sort_by(|a, b| (&a.tile, &a.method).cmp(&(&b.tile, &b.method)));
    Ok(records)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with a `#` comment line carrying the tool version and bin count.
pub fn records_to_csv(records: &[EvalRecord], bins: usize) -> String {
    let mut out = format!("# demfill {} bins={bins}\n", crate::VERSION);
    out.push_str("method,tile,seed,mse,em,wall_time_s,status\n");
    for r in records {
        let seed = r.seed.map_or("-".to_string(), |s| s.to_string());
        let time = r.wall_time.map_or("-".to_string(), |t| format!("{t:.6}"));
        let status = match &r.outcome {
            Outcome::Ok => "ok".to_string(),
            Outcome::Failed(msg) => format!("error: {msg}"),
        };
        let _ = writeln!(
            out,
            "{},{},{seed},{},{},{time},{}",
            csv_field(&r.method),
            csv_field(&r.tile),
            r.mse,
            r.em,
            csv_field(&status)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub ok: usize,
    pub failed: usize,
    pub mean_mse: f64,
    pub mean_em: f64,
}

/// Per-method means over successful rows, sorted by method name.
pub fn summarize(records: &[EvalRecord]) -> Vec<MethodSummary> {
    let mut names: Vec<&str> = records.iter().map(|r| r.method.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let rows: Vec<&EvalRecord> = records.iter().filter(|r| r.method == name).collect();
            let ok: Vec<&&EvalRecord> = rows.iter().filter(|r| r.outcome == Outcome::Ok).collect();
            let n = ok.len() as f64;
            MethodSummary {
                method: name.to_string(),
                ok: ok.len(),
                failed: rows.len() - ok.len(),
                mean_mse: ok.iter().map(|r| r.mse).sum::<f64>() / n,
                mean_em: ok.iter().map(|r| r.em).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Loads every `*.asc` tile of a directory in name order. A sibling
/// `<stem>.mask.asc` supplies a fixed void for that tile.
pub fn load_tiles(dir: impl AsRef<Path>) -> Result<Vec<Tile>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            name.ends_with(".asc") && !name.ends_with(".mask.asc")
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let (truth, holes) = load_asc(&p)?;
            if holes.count_unknown() > 0 {
                return Err(Error::Shape(format!("tile `{stem}` has nodata pixels")));
            }
            let mask_path = p.with_file_name(format!("{stem}.mask.asc"));
            let mask = if mask_path.exists() {
                Some(load_mask_asc(&mask_path)?)
            } else {
                None
            };
            Ok(Tile { id: stem, truth, mask })
        })
        .collect()
}
