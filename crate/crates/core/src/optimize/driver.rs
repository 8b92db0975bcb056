//! Iterative registration loops.
//!
//! Each step evaluates the objective at the current parameters, logs it when
//! `iteration % log_every == 0`, and then applies one Adam update. The
//! recorded loss is therefore the loss *before* that iteration's update.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::adam::AdamState;
use super::objective::{validate_loss, ImageLoss, Problem, Regularizer};
use crate::error::{Error, Result};
use crate::loss::LnccConfig;
use crate::resample::resample;
use crate::transform::{apply_ddf, warp_grid_affine};
use crate::volume::{reference_grid, AffineParams, DisplacementField, Grid3, Volume3};

/// Early stopping compares the loss with the one this many iterations back.
pub const EARLY_STOP_WINDOW: usize = 50;
/// Relative loss change below which early stopping triggers.
pub const EARLY_STOP_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineRegConfig {
    pub loss: ImageLoss,
    pub lr: f64,
    pub iters: usize,
    pub log_every: usize,
    pub early_stop: bool,
}

impl Default for AffineRegConfig {
    fn default() -> Self {
        AffineRegConfig {
            loss: ImageLoss::Ssd,
            lr: 0.01,
            iters: 1001,
            log_every: 100,
            early_stop: false,
        }
    }
}

impl AffineRegConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.lr, self.iters, self.log_every)
    }
}

/// DDF registration settings. There is no `Default`: the initial field is
/// random, so the seed must be chosen explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdfRegConfig {
    pub loss: ImageLoss,
    pub regularizer: Regularizer,
    pub weight_deform_loss: f64,
    pub lr: f64,
    pub iters: usize,
    pub ddf_init_std: f64,
    pub log_every: usize,
    pub seed: u64,
    pub early_stop: bool,
}

impl DdfRegConfig {
    /// LNCC (window 9) + bending, weight 1, lr 0.1, 3001 iterations,
    /// initial displacement noise with std 1e-3.
    pub fn with_seed(seed: u64) -> Self {
        DdfRegConfig {
            loss: ImageLoss::Lncc(LnccConfig::default()),
            regularizer: Regularizer::Bending,
            weight_deform_loss: 1.0,
            lr: 0.1,
            iters: 3001,
            ddf_init_std: 1e-3,
            log_every: 100,
            seed,
            early_stop: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_common(self.lr, self.iters, self.log_every)?;
        if !(self.weight_deform_loss >= 0.0 && self.weight_deform_loss.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight_deform_loss must be finite and >= 0, got {}",
                self.weight_deform_loss
            )));
        }
        if !(self.ddf_init_std >= 0.0 && self.ddf_init_std.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ddf_init_std must be finite and >= 0, got {}",
                self.ddf_init_std
            )));
        }
        Ok(())
    }
}

fn check_common(lr: f64, iters: usize, log_every: usize) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig(format!("lr must be > 0, got {lr}")));
    }
    if iters == 0 {
        return Err(Error::InvalidConfig("iters must be >= 1".into()));
    }
    if log_every == 0 {
        return Err(Error::InvalidConfig("log_every must be >= 1".into()));
    }
    Ok(())
}

/// One logged iteration. For affine runs `deform` is 0 and `total == image`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub total: f64,
    pub image: f64,
    pub deform: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Affine(AffineRegConfig),
    Ddf(DdfRegConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalParams {
    Affine(AffineParams),
    Ddf(DisplacementField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimRun {
    pub config: RunConfig,
    pub trace: Vec<TraceRecord>,
    pub params: FinalParams,
    /// Number of Adam updates applied.
    pub iterations_run: usize,
    pub elapsed_secs: f64,
}

impl OptimRun {
    pub fn first(&self) -> &TraceRecord {
        &self.trace[0]
    }

    pub fn last(&self) -> &TraceRecord {
        self.trace.last().expect("trace is never empty")
    }
}

/// Shared optimisation loop over a flat parameter vector.
fn run_loop(
    params: &mut [f64],
    lr: f64,
    iters: usize,
    log_every: usize,
    early_stop: bool,
    mut eval: impl FnMut(&[f64]) -> (f64, f64, f64, Vec<f64>),
) -> Result<(Vec<TraceRecord>, usize)> {
    let mut adam = AdamState::new(lr, params.len())?;
    let mut trace = Vec::new();
    let mut history = Vec::new();
    let mut applied = 0;
    for iteration in 0..iters {
        let (total, image, deform, grad) = eval(params);
        if !total.is_finite() {
            return Err(Error::Divergence {
                iteration,
                loss: total,
            });
        }
        let record = TraceRecord {
            iteration,
            total,
            image,
            deform,
        };
        if iteration % log_every == 0 {
            trace.push(record);
        }
        if early_stop {
            history.push(total);
            if iteration >= EARLY_STOP_WINDOW {
                let before = history[iteration - EARLY_STOP_WINDOW];
                if (total - before).abs() <= EARLY_STOP_REL_TOL * before.abs() {
                    if iteration % log_every != 0 {
                        trace.push(record);
                    }
                    break;
                }
            }
        }
        adam.step(params, &grad)?;
        applied += 1;
    }
    if let Some(index) = params.iter().position(|p| !p.is_finite()) {
        return Err(Error::Divergence {
            iteration: applied,
            loss: params[index],
        });
    }
    Ok((trace, applied))
}

/// Affine registration starting from the identity transform.
pub fn register_affine(
    moving: &Volume3,
    fixed: &Volume3,
    cfg: &AffineRegConfig,
) -> Result<OptimRun> {
    cfg.validate()?;
    validate_loss(&cfg.loss, fixed.channels())?;
    let grid = reference_grid(fixed.shape())?;
    let problem = Problem::new(moving, fixed, &grid)?;
    let start = Instant::now();

    let mut theta = AffineParams::identity().to_flat();
    let (trace, applied) = run_loop(
        &mut theta,
        cfg.lr,
        cfg.iters,
        cfg.log_every,
        cfg.early_stop,
        |p| {
            let flat: &[f64; 12] = p.try_into().expect("12 affine parameters");
            let (loss, grad) = problem.eval_affine(flat, &cfg.loss);
            (loss, loss, 0.0, grad.to_vec())
        },
    )?;

    Ok(OptimRun {
        config: RunConfig::Affine(*cfg),
        trace,
        params: FinalParams::Affine(AffineParams::from_flat(&theta)?),
        iterations_run: applied,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Zero-mean normal displacement noise, reproducible for a given seed.
pub(crate) fn initial_ddf(shape: crate::volume::Shape3, std: f64, seed: u64) -> Result<Vec<f64>> {
    let n = shape.voxels() * 3;
    if std == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let normal = Normal::new(0.0, std)
        .map_err(|e| Error::InvalidConfig(format!("ddf_init_std {std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Dense displacement field registration.
pub fn register_ddf(moving: &Volume3, fixed: &Volume3, cfg: &DdfRegConfig) -> Result<OptimRun> {
    cfg.validate()?;
    fixed.shape().require_min(3)?;
    validate_loss(&cfg.loss, fixed.channels())?;
    let grid = reference_grid(fixed.shape())?;
    let problem = Problem::new(moving, fixed, &grid)?;
    let start = Instant::now();

    let mut field = initial_ddf(fixed.shape(), cfg.ddf_init_std, cfg.seed)?;
    let (trace, applied) = run_loop(
        &mut field,
        cfg.lr,
        cfg.iters,
        cfg.log_every,
        cfg.early_stop,
        |p| problem.eval_ddf(p, &cfg.loss, cfg.regularizer, cfg.weight_deform_loss),
    )?;

    Ok(OptimRun {
        config: RunConfig::Ddf(*cfg),
        trace,
        params: FinalParams::Ddf(DisplacementField::new(fixed.shape(), field)?),
        iterations_run: applied,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

impl FinalParams {
    /// Warps `grid_ref` by these parameters.
    pub fn warp_grid(&self, grid_ref: &Grid3) -> Result<Grid3> {
        match self {
            FinalParams::Affine(theta) => Ok(warp_grid_affine(grid_ref, theta)),
            FinalParams::Ddf(ddf) => apply_ddf(grid_ref, ddf),
        }
    }
}

/// Resamples `vol` on `grid_ref` warped by the run's final parameters.
pub fn warp_with_result(run: &OptimRun, vol: &Volume3, grid_ref: &Grid3) -> Result<Volume3> {
    Ok(resample(vol, &run.params.warp_grid(grid_ref)?))
}
