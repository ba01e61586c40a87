//! Void filling for digital elevation models.
//!
//! The crate is organised bottom-up:
//!
//! - [`raster`]: grids, masks, ASCII-grid I/O and normalization.
//! - [`geometry`]: L1 ring partition of the void, window sampling, mask and
//!   terrain synthesis.
//! - [`fillers`]: local paraboloid extension, inverse distance weighting and a
//!   tensor-product spline fill.
//! - [`blend`]: generator fill followed by a sigmoid-weighted blend with the
//!   smooth extension of the known boundary.
//! - [`neural`]: a small coarse-to-fine inpainting network with dilated
//!   convolution stacks and contextual attention.
//! - [`harness`]: MSE and histogram earth mover's distance, plus a method
//!   comparison runner.

pub mod blend;
pub mod error;
pub mod fillers;
pub mod geometry;
pub mod harness;
pub mod neural;
pub mod raster;

pub use blend::{blend_boundary, blend_weight, fill_and_blend, BlendConfig, Filler};
pub use error::{Error, Result};
pub use fillers::{
    eval_paraboloid, fill_extend, fill_idw, fill_spline, fit_paraboloid, Degree, IdwParams,
    Paraboloid, SplineParams,
};
pub use geometry::{
    known_window, ring_partition, sample_rect_mask, synth_terrain, RingPartition, Sample,
    SampleSet, TerrainKind,
};
pub use harness::{em_histogram, mse, run_comparison, EvalRecord, HistogramPair};
pub use neural::{
    generator_forward, load_weights, save_weights, Generator, GeneratorOutput, LossConfig, NetworkSpec, Tensor4,
    WeightStore,
};
pub use raster::{normalize, read_asc, write_asc, DemGrid, GeoRef, Normalization, VoidMask};

/// Tool version reported in CSV headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
