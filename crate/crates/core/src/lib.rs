//! Classical 3D image registration: affine self-registration under SSD and
//! dense displacement field registration under LNCC with a bending-energy
//! penalty, built on trilinear resampling and analytic gradients.
//!
//! Coordinates are voxel indices throughout. Volumes are stored with the
//! first spatial index slowest and the channel fastest.

pub mod cli;
pub mod error;
pub mod io;
pub mod loss;
pub mod optimize;
pub mod phantom;
pub mod resample;
pub mod transform;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{
    normalize01, reference_grid, volume_stats, AffineParams, DisplacementField, Grid3, Shape3,
    Volume3, VolumeStats,
};
