//! Evaluation: error metrics and a runner that compares fill methods over a
//! set of tiles.

pub mod compare;
pub mod metrics;

pub use compare::{
    load_tiles, parse_methods, records_to_csv, run_comparison, summarize, CompareConfig, EvalRecord, Method,
    MethodKind, MethodSummary, Outcome, Tile,
};
pub use metrics::{em_histogram, em_masses, mse, HistogramPair, DEFAULT_BINS};
