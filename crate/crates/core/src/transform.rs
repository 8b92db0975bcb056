//! Random affine generation and grid warping.
//!
//! Randomness comes from [`rand_chacha::ChaCha8Rng`] seeded through
//! `SeedableRng::seed_from_u64`, which produces the same stream on every
//! platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::{AffineParams, DisplacementField, Grid3, Shape3};

/// Magnitude and seed of a random affine perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomTransformSpec {
    pub scale: f64,
    pub seed: u64,
}

impl RandomTransformSpec {
    pub fn new(scale: f64, seed: u64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "transform scale must be finite and >= 0, got {scale}"
            )));
        }
        Ok(RandomTransformSpec { scale, seed })
    }
}

/// Identity plus independent uniform perturbations.
///
/// Linear entries move by at most `scale`, translation entries by at most
/// `scale * max(shape)` voxels. Entries are drawn in row-major order.
pub fn random_affine(spec: &RandomTransformSpec, shape: Shape3) -> AffineParams {
    if spec.scale == 0.0 {
        return AffineParams::identity();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut theta = *AffineParams::identity().theta();
    let translation_bound = spec.scale * shape.max_dim() as f64;
    for (r, row) in theta.iter_mut().enumerate() {
        let bound = if r == 3 {
            translation_bound
        } else {
            spec.scale
        };
        for x in row.iter_mut() {
            let u: f64 = rng.random();
            *x += (2.0 * u - 1.0) * bound;
        }
    }
    AffineParams::new(theta).expect("bounded perturbation of identity is finite")
}

/// Maps every grid coordinate through `theta`.
pub fn warp_grid_affine(grid: &Grid3, theta: &AffineParams) -> Grid3 {
    let mut coords = Vec::with_capacity(grid.coords().len());
    for p in grid.points() {
        coords.extend_from_slice(&theta.apply(p));
    }
    Grid3::from_parts(grid.shape(), coords)
}

/// Adds a displacement field to a grid voxel by voxel.
pub fn apply_ddf(grid: &Grid3, ddf: &DisplacementField) -> Result<Grid3> {
    if grid.shape() != ddf.shape() {
        return Err(Error::ShapeMismatch {
            context: "apply_ddf grid vs ddf",
            left: grid.shape().0.to_vec(),
            right: ddf.shape().0.to_vec(),
        });
    }
    let coords = grid
        .coords()
        .iter()
        .zip(ddf.vectors())
        .map(|(g, d)| g + d)
        .collect();
    Ok(Grid3::from_parts(grid.shape(), coords))
}

/// Root-mean-square distance, in voxels, between the images of every voxel
/// of `shape` under two affine transforms.
pub fn affine_residual_rms(a: &AffineParams, b: &AffineParams, shape: Shape3) -> f64 {
    let mut sum = 0.0;
    for [i, j, k] in shape.iter() {
        let p = [i as f64, j as f64, k as f64];
        let pa = a.apply(p);
        let pb = b.apply(p);
        sum += (0..3).map(|d| (pa[d] - pb[d]).powi(2)).sum::<f64>();
    }
    (sum / shape.voxels() as f64).sqrt()
}
