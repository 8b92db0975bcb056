//! Intensity-based dissimilarity: SSD and local normalised cross correlation.

use super::{LossKind, LossValue};
use crate::error::{Error, Result};
use crate::volume::{Shape3, Volume3};

/// Mean squared difference over every voxel and channel.
pub fn ssd(a: &Volume3, b: &Volume3) -> Result<LossValue> {
    a.require_same_layout(b, "ssd")?;
    Ok(LossValue::new(
        LossKind::Ssd,
        ssd_value_grad(a.data(), b.data(), false).0,
    ))
}

/// `d ssd(a, b) / d a` = `2 (a - b) / N`.
pub fn ssd_grad(a: &Volume3, b: &Volume3) -> Result<Volume3> {
    a.require_same_layout(b, "ssd")?;
    let grad = ssd_value_grad(a.data(), b.data(), true).1;
    Ok(Volume3::from_parts(a.shape(), a.channels(), grad))
}

pub(crate) fn ssd_value_grad(a: &[f64], b: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
    let n = a.len() as f64;
    let value = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    let grad = if want_grad {
        a.iter().zip(b).map(|(x, y)| 2.0 * (x - y) / n).collect()
    } else {
        Vec::new()
    };
    (value, grad)
}

/// Window and variance floor for [`lncc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnccConfig {
    /// Side of the cubic window; odd and at least 3.
    pub window: usize,
    pub eps: f64,
}

impl Default for LnccConfig {
    fn default() -> Self {
        LnccConfig {
            window: 9,
            eps: 1e-5,
        }
    }
}

impl LnccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "lncc window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lncc eps must be > 0, got {}",
                self.eps
            )));
        }
        Ok(())
    }

    fn radius(&self) -> usize {
        self.window / 2
    }
}

/// Negated mean of the squared local correlation
/// `cov^2 / (var_a * var_b + eps)`, computed over cubic windows truncated
/// at the volume boundary. Ranges over `[-1, 0]`, lower is better.
pub fn lncc(a: &Volume3, b: &Volume3, cfg: &LnccConfig) -> Result<LossValue> {
    check_lncc_inputs(a, b, cfg)?;
    let (value, _) = lncc_value_grad(a.data(), b.data(), a.shape(), cfg, false);
    Ok(LossValue::new(LossKind::Lncc, value))
}

/// `d lncc(a, b) / d a`.
pub fn lncc_grad(a: &Volume3, b: &Volume3, cfg: &LnccConfig) -> Result<Volume3> {
    check_lncc_inputs(a, b, cfg)?;
    let (_, grad) = lncc_value_grad(a.data(), b.data(), a.shape(), cfg, true);
    Ok(Volume3::from_parts(a.shape(), 1, grad))
}

fn check_lncc_inputs(a: &Volume3, b: &Volume3, cfg: &LnccConfig) -> Result<()> {
    a.require_same_layout(b, "lncc")?;
    if a.channels() != 1 {
        return Err(Error::InvalidShape {
            shape: vec![a.channels()],
            reason: "lncc needs single-channel volumes".into(),
        });
    }
    cfg.validate()
}

/// Windowed sums of `data` over `[i-r, i+r]` per axis, truncated at the
/// boundary. Separable: one prefix-sum pass per axis.
fn box_sum(data: &[f64], shape: Shape3, r: usize) -> Vec<f64> {
    let dims = shape.dims();
    let strides = [dims[1] * dims[2], dims[2], 1];
    let mut cur = data.to_vec();
    let mut prefix = Vec::new();
    for axis in 0..3 {
        let len = dims[axis];
        let stride = strides[axis];
        let mut next = vec![0.0; cur.len()];
        for start in line_starts(dims, axis) {
            prefix.clear();
            prefix.push(0.0);
            let mut acc = 0.0;
            for t in 0..len {
                acc += cur[start + t * stride];
                prefix.push(acc);
            }
            for t in 0..len {
                let lo = t.saturating_sub(r);
                let hi = (t + r).min(len - 1);
                next[start + t * stride] = prefix[hi + 1] - prefix[lo];
            }
        }
        cur = next;
    }
    cur
}

/// Flat offsets of the first voxel of every line running along `axis`.
fn line_starts(dims: [usize; 3], axis: usize) -> Vec<usize> {
    let strides = [dims[1] * dims[2], dims[2], 1];
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let mut starts = Vec::with_capacity(dims[others[0]] * dims[others[1]]);
    for p in 0..dims[others[0]] {
        for q in 0..dims[others[1]] {
            starts.push(p * strides[others[0]] + q * strides[others[1]]);
        }
    }
    starts
}

fn window_counts(shape: Shape3, r: usize) -> Vec<f64> {
    let per_axis: Vec<Vec<f64>> = shape
        .dims()
        .iter()
        .map(|&d| {
            (0..d)
                .map(|t| ((t + r).min(d - 1) - t.saturating_sub(r) + 1) as f64)
                .collect()
        })
        .collect();
    shape
        .iter()
        .map(|[i, j, k]| per_axis[0][i] * per_axis[1][j] * per_axis[2][k])
        .collect()
}

pub(crate) fn lncc_value_grad(
    a: &[f64],
    b: &[f64],
    shape: Shape3,
    cfg: &LnccConfig,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let r = cfg.radius();
    let n_vox = a.len();
    let counts = window_counts(shape, r);
    let sum_a = box_sum(a, shape, r);
    let sum_b = box_sum(b, shape, r);
    let sq: Vec<f64> = a.iter().map(|x| x * x).collect();
    let sum_aa = box_sum(&sq, shape, r);
    let sq: Vec<f64> = b.iter().map(|x| x * x).collect();
    let sum_bb = box_sum(&sq, shape, r);
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let sum_ab = box_sum(&prod, shape, r);

    let mut total = 0.0;
    // Per-window coefficients of the adjoint, divided by the window size.
    let mut alpha = if want_grad {
        vec![0.0; n_vox]
    } else {
        Vec::new()
    };
    let mut alpha_mb = alpha.clone();
    let mut beta = alpha.clone();
    let mut beta_ma = alpha.clone();
    for v in 0..n_vox {
        let n = counts[v];
        let ma = sum_a[v] / n;
        let mb = sum_b[v] / n;
        let var_a = sum_aa[v] / n - ma * ma;
        let var_b = sum_bb[v] / n - mb * mb;
        let cov = sum_ab[v] / n - ma * mb;
        let den = var_a * var_b + cfg.eps;
        total += cov * cov / den;
        if want_grad {
            let d_cov = 2.0 * cov / den;
            let d_var_a = -cov * cov * var_b / (den * den);
            alpha[v] = d_cov / n;
            alpha_mb[v] = d_cov * mb / n;
            beta[v] = 2.0 * d_var_a / n;
            beta_ma[v] = 2.0 * d_var_a * ma / n;
        }
    }
    let value = -total / n_vox as f64;
    if !want_grad {
        return (value, Vec::new());
    }

    // Windows are symmetric, so the adjoint of a box sum is the same box sum.
    let s_alpha = box_sum(&alpha, shape, r);
    let s_alpha_mb = box_sum(&alpha_mb, shape, r);
    let s_beta = box_sum(&beta, shape, r);
    let s_beta_ma = box_sum(&beta_ma, shape, r);
    let scale = -1.0 / n_vox as f64;
    let grad = (0..n_vox)
        .map(|u| scale * (b[u] * s_alpha[u] - s_alpha_mb[u] + a[u] * s_beta[u] - s_beta_ma[u]))
        .collect();
    (value, grad)
}
