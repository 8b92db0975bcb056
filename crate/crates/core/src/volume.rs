//! Value types shared by every stage of the pipeline.
//!
//! All coordinates are voxel indices with unit spacing. Dense arrays are
//! stored row-major with the first spatial index slowest and the channel
//! (or vector component) fastest:
//!
//! ```text
//! flat(i, j, k, c) = ((i * D2 + j) * D3 + k) * C + c
//! ```

use crate::error::{Error, Result};

/// Voxel counts along the three spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape3(pub [usize; 3]);

impl Shape3 {
    pub fn new(d1: usize, d2: usize, d3: usize) -> Self {
        Shape3([d1, d2, d3])
    }

    /// Checks that every axis has at least `min` voxels.
    pub fn require_min(&self, min: usize) -> Result<()> {
        if self.0.iter().any(|&d| d < min) {
            return Err(Error::InvalidShape {
                shape: self.0.to_vec(),
                reason: format!("every dimension must be >= {min}"),
            });
        }
        Ok(())
    }

    pub fn voxels(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.0
    }

    pub fn max_dim(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Flat voxel index (without channel).
    #[inline]
    pub fn voxel_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.0[1] + j) * self.0[2] + k
    }

    /// Iterates over every voxel in storage order.
    pub fn iter(&self) -> impl Iterator<Item = [usize; 3]> {
        let [d1, d2, d3] = self.0;
        (0..d1).flat_map(move |i| (0..d2).flat_map(move |j| (0..d3).map(move |k| [i, j, k])))
    }
}

impl From<[usize; 3]> for Shape3 {
    fn from(d: [usize; 3]) -> Self {
        Shape3(d)
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_len(shape: Shape3, per_voxel: usize, len: usize) -> Result<()> {
    let expected = shape.voxels() * per_voxel;
    if len != expected {
        return Err(Error::InvalidShape {
            shape: shape.0.to_vec(),
            reason: format!("data length {len} does not match expected {expected}"),
        });
    }
    Ok(())
}

/// Dense 3D scalar grid with one or more channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3 {
    shape: Shape3,
    channels: usize,
    data: Vec<f64>,
}

impl Volume3 {
    pub fn new(shape: impl Into<Shape3>, channels: usize, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        shape.require_min(2)?;
        if channels == 0 {
            return Err(Error::InvalidShape {
                shape: shape.0.to_vec(),
                reason: "channel count must be >= 1".into(),
            });
        }
        check_len(shape, channels, data.len())?;
        check_finite(&data)?;
        Ok(Volume3 {
            shape,
            channels,
            data,
        })
    }

    pub fn zeros(shape: impl Into<Shape3>, channels: usize) -> Result<Self> {
        let shape = shape.into();
        Self::new(shape, channels, vec![0.0; shape.voxels() * channels.max(1)])
    }

    pub fn constant(shape: impl Into<Shape3>, channels: usize, value: f64) -> Result<Self> {
        let shape = shape.into();
        Self::new(
            shape,
            channels,
            vec![value; shape.voxels() * channels.max(1)],
        )
    }

    /// Builds a volume by evaluating `f(i, j, k, c)` in storage order.
    pub fn from_fn(
        shape: impl Into<Shape3>,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.voxels() * channels);
        for [i, j, k] in shape.iter() {
            for c in 0..channels {
                data.push(f(i, j, k, c));
            }
        }
        Self::new(shape, channels, data)
    }

    /// Internal constructor for outputs computed from already validated inputs.
    pub(crate) fn from_parts(shape: Shape3, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.voxels() * channels);
        Volume3 {
            shape,
            channels,
            data,
        }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize, c: usize) -> usize {
        self.shape.voxel_index(i, j, k) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, c: usize) -> f64 {
        self.data[self.index(i, j, k, c)]
    }

    /// Copies one channel out as a single-channel volume.
    pub fn channel(&self, c: usize) -> Result<Volume3> {
        if c >= self.channels {
            return Err(Error::IndexOutOfRange {
                axis: 3,
                index: c,
                extent: self.channels,
            });
        }
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Ok(Volume3::from_parts(self.shape, 1, data))
    }

    /// Returns a copy with `f` applied to every value. Fails if `f` produces
    /// a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Volume3> {
        Volume3::new(
            self.shape,
            self.channels,
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn stats(&self) -> VolumeStats {
        volume_stats(self)
    }

    pub(crate) fn require_same_layout(&self, other: &Volume3, context: &'static str) -> Result<()> {
        if self.shape != other.shape || self.channels != other.channels {
            let mut left = self.shape.0.to_vec();
            left.push(self.channels);
            let mut right = other.shape.0.to_vec();
            right.push(other.channels);
            return Err(Error::ShapeMismatch {
                context,
                left,
                right,
            });
        }
        Ok(())
    }
}

/// Extrema and arithmetic mean over every voxel and channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn volume_stats(v: &Volume3) -> VolumeStats {
    let (min, max, sum) = v.data.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, 0.0),
        |(lo, hi, s), &x| (lo.min(x), hi.max(x), s + x),
    );
    VolumeStats {
        min,
        max,
        mean: sum / v.data.len() as f64,
    }
}

/// Rescales intensities linearly onto `[0, 1]`.
pub fn normalize01(v: &Volume3) -> Result<Volume3> {
    let VolumeStats { min, max, .. } = volume_stats(v);
    if max <= min {
        return Err(Error::DegenerateRange { value: min });
    }
    let range = max - min;
    let data = v.data.iter().map(|&x| (x - min) / range).collect();
    Ok(Volume3::from_parts(v.shape, v.channels, data))
}

/// Per-voxel sampling positions, in voxel units of some source volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    shape: Shape3,
    coords: Vec<f64>,
}

impl Grid3 {
    pub fn new(shape: impl Into<Shape3>, coords: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        shape.require_min(1)?;
        check_len(shape, 3, coords.len())?;
        check_finite(&coords)?;
        Ok(Grid3 { shape, coords })
    }

    pub(crate) fn from_parts(shape: Shape3, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), shape.voxels() * 3);
        Grid3 { shape, coords }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let n = self.shape.voxel_index(i, j, k) * 3;
        [self.coords[n], self.coords[n + 1], self.coords[n + 2]]
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.coords.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

/// Identity sampling grid: voxel `(i, j, k)` holds the coordinate `(i, j, k)`.
pub fn reference_grid(shape: impl Into<Shape3>) -> Result<Grid3> {
    let shape = shape.into();
    shape.require_min(2)?;
    let mut coords = Vec::with_capacity(shape.voxels() * 3);
    for [i, j, k] in shape.iter() {
        coords.extend_from_slice(&[i as f64, j as f64, k as f64]);
    }
    Ok(Grid3::from_parts(shape, coords))
}

/// Per-voxel displacement vectors on the fixed grid, in voxel units.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    shape: Shape3,
    vectors: Vec<f64>,
}

impl DisplacementField {
    pub fn new(shape: impl Into<Shape3>, vectors: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        shape.require_min(1)?;
        check_len(shape, 3, vectors.len())?;
        check_finite(&vectors)?;
        Ok(DisplacementField { shape, vectors })
    }

    pub fn zeros(shape: impl Into<Shape3>) -> Result<Self> {
        let shape = shape.into();
        Self::new(shape, vec![0.0; shape.voxels() * 3])
    }

    /// Builds a field by evaluating `f(i, j, k)` in storage order.
    pub fn from_fn(
        shape: impl Into<Shape3>,
        mut f: impl FnMut(usize, usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let shape = shape.into();
        let mut vectors = Vec::with_capacity(shape.voxels() * 3);
        for [i, j, k] in shape.iter() {
            vectors.extend_from_slice(&f(i, j, k));
        }
        Self::new(shape, vectors)
    }

    pub(crate) fn from_parts(shape: Shape3, vectors: Vec<f64>) -> Self {
        debug_assert_eq!(vectors.len(), shape.voxels() * 3);
        DisplacementField { shape, vectors }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<f64> {
        self.vectors
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let n = self.shape.voxel_index(i, j, k) * 3;
        [self.vectors[n], self.vectors[n + 1], self.vectors[n + 2]]
    }

    /// Largest absolute component over the whole field.
    pub fn max_abs(&self) -> f64 {
        self.vectors.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest Euclidean displacement length over the whole field.
    pub fn max_norm(&self) -> f64 {
        self.vectors
            .chunks_exact(3)
            .map(|d| (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Views the field as a three-channel volume (component = channel).
    pub fn to_volume(&self) -> Result<Volume3> {
        Volume3::new(self.shape, 3, self.vectors.clone())
    }

    pub fn from_volume(v: &Volume3) -> Result<Self> {
        if v.channels() != 3 {
            return Err(Error::InvalidShape {
                shape: vec![v.shape().0[0], v.shape().0[1], v.shape().0[2], v.channels()],
                reason: "a displacement field needs exactly 3 channels".into(),
            });
        }
        Self::new(v.shape(), v.data().to_vec())
    }
}

/// A 12-parameter affine transform acting on homogeneous row vectors:
/// `p' = [x, y, z, 1] · theta`.
///
/// Rows 0..3 hold the linear part, row 3 the translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    theta: [[f64; 3]; 4],
}

impl AffineParams {
    pub fn identity() -> Self {
        AffineParams {
            theta: [
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.0, 0.0],
            ],
        }
    }

    pub fn new(theta: [[f64; 3]; 4]) -> Result<Self> {
        check_finite(theta.as_flattened())?;
        Ok(AffineParams { theta })
    }

    /// Row-major flat form (12 values).
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 12 {
            return Err(Error::InvalidShape {
                shape: vec![flat.len()],
                reason: "affine parameters need exactly 12 values".into(),
            });
        }
        let mut theta = [[0.0; 3]; 4];
        for (n, &x) in flat.iter().enumerate() {
            theta[n / 3][n % 3] = x;
        }
        Self::new(theta)
    }

    pub fn translation(t: [f64; 3]) -> Result<Self> {
        let mut a = Self::identity();
        a.theta[3] = t;
        Self::new(a.theta)
    }

    pub fn theta(&self) -> &[[f64; 3]; 4] {
        &self.theta
    }

    pub fn to_flat(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out.copy_from_slice(self.theta.as_flattened());
        out
    }

    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let t = &self.theta;
        let mut out = [0.0; 3];
        for (col, o) in out.iter_mut().enumerate() {
            *o = p[0] * t[0][col] + p[1] * t[1][col] + p[2] * t[2][col] + t[3][col];
        }
        out
    }

    /// The transform that applies `self` first and `then` second.
    pub fn then(&self, then: &AffineParams) -> AffineParams {
        let a = &self.theta;
        let b = &then.theta;
        let mut theta = [[0.0; 3]; 4];
        for r in 0..4 {
            for c in 0..3 {
                let mut s = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
                if r == 3 {
                    s += b[3][c];
                }
                theta[r][c] = s;
            }
        }
        AffineParams { theta }
    }
}

impl Default for AffineParams {
    fn default() -> Self {
        Self::identity()
    }
}
