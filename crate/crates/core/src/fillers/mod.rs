//! Classical void fillers.

mod extend;
mod idw;
mod paraboloid;
mod spline;

pub(crate) use extend::RingExtender;
pub use extend::fill_extend;
pub use idw::{fill_idw, IdwParams};
pub use paraboloid::{eval_paraboloid, fit_paraboloid, Degree, Paraboloid, MAX_CONDITION};
pub use spline::{fill_spline, fit_spline, SplineParams, SplineSurface};

/// Default paraboloid window radius.
pub const DEFAULT_FIT_RADIUS: usize = 3;
