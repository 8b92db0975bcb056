//! Registration objectives and their gradients by the chain rule:
//! parameters -> sampling coordinates -> resampled intensities -> loss.

use crate::error::{Error, Result};
use crate::loss::{
    bending_value_grad, gradient_norm_value_grad, lncc_value_grad, ssd_value_grad, GradNorm,
    LnccConfig,
};
use crate::resample::sample_points;
use crate::volume::{AffineParams, DisplacementField, Grid3, Shape3, Volume3};

/// Image dissimilarity between the warped moving image and the fixed image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImageLoss {
    Ssd,
    Lncc(LnccConfig),
}

impl ImageLoss {
    pub fn name(&self) -> &'static str {
        match self {
            ImageLoss::Ssd => "ssd",
            ImageLoss::Lncc(_) => "lncc",
        }
    }

    fn validate(&self, channels: usize) -> Result<()> {
        if let ImageLoss::Lncc(cfg) = self {
            cfg.validate()?;
            if channels != 1 {
                return Err(Error::InvalidShape {
                    shape: vec![channels],
                    reason: "lncc needs single-channel volumes".into(),
                });
            }
        }
        Ok(())
    }

    /// Loss value and its gradient with respect to `warped`.
    fn value_grad(&self, warped: &[f64], fixed: &[f64], shape: Shape3) -> (f64, Vec<f64>) {
        match self {
            ImageLoss::Ssd => ssd_value_grad(warped, fixed, true),
            ImageLoss::Lncc(cfg) => lncc_value_grad(warped, fixed, shape, cfg, true),
        }
    }
}

/// Smoothness penalty on a displacement field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    Bending,
    GradL1,
    GradL2,
}

impl Regularizer {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::Bending => "bending",
            Regularizer::GradL1 => "gradient-l1",
            Regularizer::GradL2 => "gradient-l2",
        }
    }

    fn value_grad(&self, field: &[f64], shape: Shape3) -> (f64, Vec<f64>) {
        match self {
            Regularizer::Bending => bending_value_grad(field, shape, true),
            Regularizer::GradL1 => gradient_norm_value_grad(field, shape, GradNorm::L1, true),
            Regularizer::GradL2 => gradient_norm_value_grad(field, shape, GradNorm::L2, true),
        }
    }
}

/// A validated moving/fixed pair with the grid the fixed image is sampled on.
pub(crate) struct Problem<'a> {
    moving: &'a Volume3,
    fixed: &'a Volume3,
    grid: &'a Grid3,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(moving: &'a Volume3, fixed: &'a Volume3, grid: &'a Grid3) -> Result<Self> {
        if grid.shape() != fixed.shape() {
            return Err(Error::ShapeMismatch {
                context: "reference grid vs fixed image",
                left: grid.shape().0.to_vec(),
                right: fixed.shape().0.to_vec(),
            });
        }
        if moving.channels() != fixed.channels() {
            return Err(Error::ShapeMismatch {
                context: "moving vs fixed channels",
                left: vec![moving.channels()],
                right: vec![fixed.channels()],
            });
        }
        Ok(Problem {
            moving,
            fixed,
            grid,
        })
    }

    /// Samples the moving image at `coords` and back-propagates the image
    /// loss to per-voxel coordinate gradients. Returns `(loss, dL/dcoords)`.
    fn image_term(&self, coords: &[f64], loss: &ImageLoss) -> (f64, Vec<f64>) {
        let n = self.grid.shape().voxels();
        let ch = self.fixed.channels();
        let mut warped = vec![0.0; n * ch];
        let mut dwarp = vec![0.0; n * ch * 3];
        sample_points(self.moving, coords, &mut warped, Some(&mut dwarp));
        let (value, g_img) = loss.value_grad(&warped, self.fixed.data(), self.fixed.shape());

        let mut g_coords = vec![0.0; n * 3];
        for v in 0..n {
            for c in 0..ch {
                let g = g_img[v * ch + c];
                let o = (v * ch + c) * 3;
                for a in 0..3 {
                    g_coords[v * 3 + a] += g * dwarp[o + a];
                }
            }
        }
        (value, g_coords)
    }

    pub(crate) fn eval_affine(&self, theta: &[f64; 12], loss: &ImageLoss) -> (f64, [f64; 12]) {
        let mut coords = Vec::with_capacity(self.grid.coords().len());
        for p in self.grid.points() {
            for col in 0..3 {
                coords.push(
                    p[0] * theta[col]
                        + p[1] * theta[3 + col]
                        + p[2] * theta[6 + col]
                        + theta[9 + col],
                );
            }
        }
        let (value, g_coords) = self.image_term(&coords, loss);

        // d coord_col / d theta[row][col] = h[row] with h = [x, y, z, 1].
        let mut grad = [0.0; 12];
        for (p, g) in self.grid.points().zip(g_coords.chunks_exact(3)) {
            let h = [p[0], p[1], p[2], 1.0];
            for row in 0..4 {
                for col in 0..3 {
                    grad[row * 3 + col] += h[row] * g[col];
                }
            }
        }
        (value, grad)
    }

    /// Returns `(total, image, deform, gradient)`.
    pub(crate) fn eval_ddf(
        &self,
        field: &[f64],
        loss: &ImageLoss,
        regularizer: Regularizer,
        weight: f64,
    ) -> (f64, f64, f64, Vec<f64>) {
        let coords: Vec<f64> = self
            .grid
            .coords()
            .iter()
            .zip(field)
            .map(|(g, d)| g + d)
            .collect();
        let (image, mut grad) = self.image_term(&coords, loss);
        let (deform, g_reg) = regularizer.value_grad(field, self.fixed.shape());
        for (g, r) in grad.iter_mut().zip(&g_reg) {
            *g += weight * r;
        }
        (image + weight * deform, image, deform, grad)
    }
}

/// SSD objective of an affine transform and its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineEval {
    pub loss: f64,
    /// Row-major, same layout as [`AffineParams::to_flat`].
    pub grad: [f64; 12],
}

impl AffineEval {
    pub fn grad_matrix(&self) -> [[f64; 3]; 4] {
        let mut m = [[0.0; 3]; 4];
        for (n, &g) in self.grad.iter().enumerate() {
            m[n / 3][n % 3] = g;
        }
        m
    }
}

/// `ssd(resample(moving, warp_grid_affine(grid_ref, theta)), fixed)` and
/// its gradient with respect to the 12 affine parameters.
pub fn affine_objective(
    theta: &AffineParams,
    moving: &Volume3,
    fixed: &Volume3,
    grid_ref: &Grid3,
) -> Result<AffineEval> {
    let problem = Problem::new(moving, fixed, grid_ref)?;
    let (loss, grad) = problem.eval_affine(&theta.to_flat(), &ImageLoss::Ssd);
    Ok(AffineEval { loss, grad })
}

/// LNCC plus weighted bending energy of a displacement field, with the
/// gradient of the total.
#[derive(Debug, Clone, PartialEq)]
pub struct DdfEval {
    pub total: f64,
    pub image: f64,
    pub deform: f64,
    pub grad: DisplacementField,
}

pub fn ddf_objective(
    ddf: &DisplacementField,
    moving: &Volume3,
    fixed: &Volume3,
    grid_ref: &Grid3,
    weight: f64,
    lncc_cfg: &LnccConfig,
) -> Result<DdfEval> {
    eval_ddf_with(
        ddf,
        moving,
        fixed,
        grid_ref,
        &ImageLoss::Lncc(*lncc_cfg),
        Regularizer::Bending,
        weight,
    )
}

pub(crate) fn eval_ddf_with(
    ddf: &DisplacementField,
    moving: &Volume3,
    fixed: &Volume3,
    grid_ref: &Grid3,
    loss: &ImageLoss,
    regularizer: Regularizer,
    weight: f64,
) -> Result<DdfEval> {
    let problem = Problem::new(moving, fixed, grid_ref)?;
    if ddf.shape() != fixed.shape() {
        return Err(Error::ShapeMismatch {
            context: "ddf vs fixed image",
            left: ddf.shape().0.to_vec(),
            right: fixed.shape().0.to_vec(),
        });
    }
    fixed.shape().require_min(3)?;
    loss.validate(fixed.channels())?;
    let (total, image, deform, grad) = problem.eval_ddf(ddf.vectors(), loss, regularizer, weight);
    Ok(DdfEval {
        total,
        image,
        deform,
        grad: DisplacementField::from_parts(ddf.shape(), grad),
    })
}

pub(crate) fn validate_loss(loss: &ImageLoss, channels: usize) -> Result<()> {
    loss.validate(channels)
}
