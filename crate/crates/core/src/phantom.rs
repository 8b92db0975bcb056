//! Synthetic test phantoms: Gaussian intensity blobs with spherical labels,
//! optionally paired with a warped copy and the warp that produced it.
//!
//! All draws come from a `ChaCha8Rng` seeded with `seed_from_u64`, consumed
//! through `Rng::random::<f64>()` only, so phantoms are identical on every
//! platform.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::resample::resample;
use crate::transform::{apply_ddf, random_affine, warp_grid_affine, RandomTransformSpec};
use crate::volume::{
    normalize01, reference_grid, AffineParams, DisplacementField, Shape3, Volume3,
};

/// Low-frequency sinusoidal displacement: a sum of plane waves rescaled so
/// the largest displacement length equals `amplitude` voxels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothDdfSpec {
    pub amplitude: f64,
    /// Number of plane-wave components, 1 to 3.
    pub components: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PhantomWarp {
    #[default]
    None,
    Affine(RandomTransformSpec),
    SmoothDdf(SmoothDdfSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub shape: Shape3,
    pub seed: u64,
    pub n_blobs: usize,
    /// One label channel per blob, for the first `n_labels` blobs.
    pub n_labels: usize,
    /// Blob widths are drawn uniformly from this range, as fractions of the
    /// largest dimension.
    pub sigma_range: [f64; 2],
    /// Blob centres keep this fraction of each extent clear at both ends.
    pub center_margin: f64,
    /// Label sphere radius in units of the blob's sigma.
    pub label_radius: f64,
    pub warp: PhantomWarp,
}

impl PhantomSpec {
    pub fn new(shape: impl Into<Shape3>, seed: u64) -> Self {
        PhantomSpec {
            shape: shape.into(),
            seed,
            n_blobs: 5,
            n_labels: 1,
            sigma_range: [0.06, 0.12],
            center_margin: 0.25,
            label_radius: 1.2,
            warp: PhantomWarp::None,
        }
    }

    pub fn with_warp(mut self, warp: PhantomWarp) -> Self {
        self.warp = warp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.require_min(2)?;
        if self.n_labels == 0 {
            return Err(Error::InvalidConfig(
                "a phantom needs at least one label channel".into(),
            ));
        }
        let [lo, hi] = self.sigma_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "blob sigma range must satisfy 0 < lo <= hi, got {lo}..{hi}"
            )));
        }
        if !(0.0..0.5).contains(&self.center_margin) {
            return Err(Error::InvalidConfig(format!(
                "centre margin must be in [0, 0.5), got {}",
                self.center_margin
            )));
        }
        if !(self.label_radius > 0.0 && self.label_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "label radius must be positive, got {}",
                self.label_radius
            )));
        }
        if let PhantomWarp::SmoothDdf(d) = &self.warp {
            if !(d.amplitude >= 0.0 && d.amplitude.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "ddf amplitude must be >= 0, got {}",
                    d.amplitude
                )));
            }
            if !(1..=3).contains(&d.components) {
                return Err(Error::InvalidConfig(format!(
                    "ddf components must be 1 to 3, got {}",
                    d.components
                )));
            }
        }
        if let PhantomWarp::Affine(a) = &self.warp {
            RandomTransformSpec::new(a.scale, a.seed)?;
        }
        Ok(())
    }
}

/// The transform used to generate the moving pair.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Identity,
    Affine(AffineParams),
    Ddf(DisplacementField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub fixed_image: Volume3,
    pub fixed_labels: Volume3,
    /// Fixed pair resampled on the reference grid warped by `ground_truth`.
    pub moving_image: Volume3,
    pub moving_labels: Volume3,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    center: [f64; 3],
    sigma: f64,
    amplitude: f64,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn draw_blobs(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<Blob> {
    let dims = spec.shape.dims();
    let scale = spec.shape.max_dim() as f64;
    (0..spec.n_blobs)
        .map(|_| {
            let mut center = [0.0; 3];
            for (c, &d) in center.iter_mut().zip(&dims) {
                let extent = (d - 1) as f64;
                *c = uniform(
                    rng,
                    spec.center_margin * extent,
                    (1.0 - spec.center_margin) * extent,
                );
            }
            Blob {
                center,
                sigma: uniform(
                    rng,
                    spec.sigma_range[0] * scale,
                    spec.sigma_range[1] * scale,
                ),
                amplitude: uniform(rng, 0.5, 1.0),
            }
        })
        .collect()
}

fn dist2(p: [f64; 3], q: [f64; 3]) -> f64 {
    (0..3).map(|a| (p[a] - q[a]).powi(2)).sum()
}

/// Builds a smooth displacement field from plane waves.
pub fn smooth_ddf(shape: Shape3, spec: &SmoothDdfSpec) -> Result<DisplacementField> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dims = shape.dims();
    let mut waves = Vec::with_capacity(spec.components);
    for _ in 0..spec.components {
        let mut dir = [0.0; 3];
        for d in dir.iter_mut() {
            *d = uniform(&mut rng, -1.0, 1.0);
        }
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|d| *d /= norm);
        // At most one cycle across each axis, never a constant wave.
        let mut freq = [0.0; 3];
        while freq.iter().all(|&f| f == 0.0) {
            for f in freq.iter_mut() {
                *f = (rng.random::<f64>() * 2.0).floor().min(1.0);
            }
        }
        let phase = uniform(&mut rng, 0.0, 2.0 * PI);
        waves.push((dir, freq, phase));
    }
    let mut field = DisplacementField::from_fn(shape, |i, j, k| {
        let p = [i as f64, j as f64, k as f64];
        let mut d = [0.0; 3];
        for (dir, freq, phase) in &waves {
            let arg: f64 = (0..3)
                .map(|a| 2.0 * PI * freq[a] * p[a] / dims[a] as f64)
                .sum::<f64>()
                + phase;
            let s = arg.sin();
            for a in 0..3 {
                d[a] += dir[a] * s;
            }
        }
        d
    })?;
    let peak = field.max_norm();
    if peak > 0.0 {
        let factor = spec.amplitude / peak;
        field =
            DisplacementField::new(shape, field.vectors().iter().map(|x| x * factor).collect())?;
    }
    Ok(field)
}

/// Deterministic phantom for a given spec.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blobs = draw_blobs(spec, &mut rng);

    let raw = Volume3::from_fn(spec.shape, 1, |i, j, k, _| {
        let p = [i as f64, j as f64, k as f64];
        blobs
            .iter()
            .map(|b| b.amplitude * (-dist2(p, b.center) / (2.0 * b.sigma * b.sigma)).exp())
            .sum()
    })?;
    let fixed_image = if blobs.is_empty() {
        raw
    } else {
        normalize01(&raw)?
    };

    let fixed_labels = Volume3::from_fn(spec.shape, spec.n_labels, |i, j, k, c| {
        let p = [i as f64, j as f64, k as f64];
        match blobs.get(c) {
            Some(b) if dist2(p, b.center) <= (spec.label_radius * b.sigma).powi(2) => 1.0,
            _ => 0.0,
        }
    })?;

    let grid = reference_grid(spec.shape)?;
    let (warped_grid, ground_truth) = match &spec.warp {
        PhantomWarp::None => (None, GroundTruth::Identity),
        PhantomWarp::Affine(t) => {
            let theta = random_affine(t, spec.shape);
            (
                Some(warp_grid_affine(&grid, &theta)),
                GroundTruth::Affine(theta),
            )
        }
        PhantomWarp::SmoothDdf(d) => {
            let field = smooth_ddf(spec.shape, d)?;
            (Some(apply_ddf(&grid, &field)?), GroundTruth::Ddf(field))
        }
    };
    let (moving_image, moving_labels) = match &warped_grid {
        Some(g) => (
            resample(&fixed_image, g),
            // Labels stay binary, as delineations are.
            resample(&fixed_labels, g).map(|x| if x >= 0.5 { 1.0 } else { 0.0 })?,
        ),
        None => (fixed_image.clone(), fixed_labels.clone()),
    };

    Ok(Phantom {
        fixed_image,
        fixed_labels,
        moving_image,
        moving_labels,
        ground_truth,
    })
}
