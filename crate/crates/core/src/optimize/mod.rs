//! Adam and the two registration drivers.

mod adam;
mod driver;
mod objective;

pub use adam::AdamState;
pub use driver::{
    register_affine, register_ddf, warp_with_result, AffineRegConfig, DdfRegConfig, FinalParams,
    OptimRun, RunConfig, TraceRecord, EARLY_STOP_REL_TOL, EARLY_STOP_WINDOW,
};
pub use objective::{affine_objective, ddf_objective, AffineEval, DdfEval, ImageLoss, Regularizer};
