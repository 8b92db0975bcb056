//! Smoothness penalties on displacement fields.
//!
//! Derivatives use central differences with unit spacing and are evaluated
//! on interior voxels only (every index in `1..D-1`), so each axis needs at
//! least three voxels.

use super::{LossKind, LossValue};
use crate::error::Result;
use crate::volume::{DisplacementField, Shape3};

/// A finite-difference stencil: `sum coef * f(v + offset)`.
struct Stencil {
    weight: f64,
    taps: &'static [([isize; 3], f64)],
}

const fn second(axis: usize) -> [([isize; 3], f64); 3] {
    let mut plus = [0isize; 3];
    let mut minus = [0isize; 3];
    plus[axis] = 1;
    minus[axis] = -1;
    [(plus, 1.0), ([0, 0, 0], -2.0), (minus, 1.0)]
}

const fn mixed(a: usize, b: usize) -> [([isize; 3], f64); 4] {
    let mut pp = [0isize; 3];
    let mut pm = [0isize; 3];
    let mut mp = [0isize; 3];
    let mut mm = [0isize; 3];
    pp[a] = 1;
    pp[b] = 1;
    pm[a] = 1;
    pm[b] = -1;
    mp[a] = -1;
    mp[b] = 1;
    mm[a] = -1;
    mm[b] = -1;
    [(pp, 0.25), (pm, -0.25), (mp, -0.25), (mm, 0.25)]
}

const fn first(axis: usize) -> [([isize; 3], f64); 2] {
    let mut plus = [0isize; 3];
    let mut minus = [0isize; 3];
    plus[axis] = 1;
    minus[axis] = -1;
    [(plus, 0.5), (minus, -0.5)]
}

const DXX: [([isize; 3], f64); 3] = second(0);
const DYY: [([isize; 3], f64); 3] = second(1);
const DZZ: [([isize; 3], f64); 3] = second(2);
const DXY: [([isize; 3], f64); 4] = mixed(0, 1);
const DXZ: [([isize; 3], f64); 4] = mixed(0, 2);
const DYZ: [([isize; 3], f64); 4] = mixed(1, 2);
const DX: [([isize; 3], f64); 2] = first(0);
const DY: [([isize; 3], f64); 2] = first(1);
const DZ: [([isize; 3], f64); 2] = first(2);

/// Squared second derivatives; mixed terms count twice.
const BENDING: [Stencil; 6] = [
    Stencil {
        weight: 1.0,
        taps: &DXX,
    },
    Stencil {
        weight: 1.0,
        taps: &DYY,
    },
    Stencil {
        weight: 1.0,
        taps: &DZZ,
    },
    Stencil {
        weight: 2.0,
        taps: &DXY,
    },
    Stencil {
        weight: 2.0,
        taps: &DXZ,
    },
    Stencil {
        weight: 2.0,
        taps: &DYZ,
    },
];

const JACOBIAN: [Stencil; 3] = [
    Stencil {
        weight: 1.0,
        taps: &DX,
    },
    Stencil {
        weight: 1.0,
        taps: &DY,
    },
    Stencil {
        weight: 1.0,
        taps: &DZ,
    },
];

fn interior_voxels(shape: Shape3) -> impl Iterator<Item = [usize; 3]> {
    let [d1, d2, d3] = shape.dims();
    (1..d1 - 1)
        .flat_map(move |i| (1..d2 - 1).flat_map(move |j| (1..d3 - 1).map(move |k| [i, j, k])))
}

fn interior_count(shape: Shape3) -> f64 {
    shape.dims().iter().map(|d| (d - 2) as f64).product()
}

#[inline]
fn tap_index(shape: Shape3, v: [usize; 3], off: [isize; 3]) -> usize {
    let i = (v[0] as isize + off[0]) as usize;
    let j = (v[1] as isize + off[1]) as usize;
    let k = (v[2] as isize + off[2]) as usize;
    shape.voxel_index(i, j, k) * 3
}

/// Evaluates `sum_v sum_c sum_s weight_s * phi(stencil_s f_c (v))` over
/// interior voxels, optionally scattering `weight_s * phi'(.)` back through
/// the stencil taps into `grad`.
fn stencil_penalty(
    field: &[f64],
    shape: Shape3,
    stencils: &[Stencil],
    phi: impl Fn(f64) -> (f64, f64),
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut total = 0.0;
    for v in interior_voxels(shape) {
        for s in stencils {
            for c in 0..3 {
                let d: f64 = s
                    .taps
                    .iter()
                    .map(|&(off, coef)| coef * field[tap_index(shape, v, off) + c])
                    .sum();
                let (value, slope) = phi(d);
                total += s.weight * value;
                if let Some(g) = grad.as_deref_mut() {
                    for &(off, coef) in s.taps {
                        g[tap_index(shape, v, off) + c] += s.weight * slope * coef;
                    }
                }
            }
        }
    }
    total
}

pub(crate) fn bending_value_grad(field: &[f64], shape: Shape3, want_grad: bool) -> (f64, Vec<f64>) {
    let norm = 1.0 / (interior_count(shape) * 3.0);
    let mut grad = if want_grad {
        vec![0.0; field.len()]
    } else {
        Vec::new()
    };
    let total = stencil_penalty(
        field,
        shape,
        &BENDING,
        |d| (d * d * norm, 2.0 * d * norm),
        want_grad.then_some(grad.as_mut_slice()),
    );
    (total, grad)
}

/// Entrywise norm used by [`displacement_gradient_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradNorm {
    L1,
    L2,
}

pub(crate) fn gradient_norm_value_grad(
    field: &[f64],
    shape: Shape3,
    norm: GradNorm,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let scale = 1.0 / interior_count(shape);
    let mut grad = if want_grad {
        vec![0.0; field.len()]
    } else {
        Vec::new()
    };
    let g = want_grad.then_some(grad.as_mut_slice());
    let total = match norm {
        GradNorm::L1 => stencil_penalty(
            field,
            shape,
            &JACOBIAN,
            |d| {
                let slope = if d == 0.0 { 0.0 } else { d.signum() * scale };
                (d.abs() * scale, slope)
            },
            g,
        ),
        GradNorm::L2 => stencil_penalty(
            field,
            shape,
            &JACOBIAN,
            |d| (d * d * scale, 2.0 * d * scale),
            g,
        ),
    };
    (total, grad)
}

/// Mean over interior voxels and the three components of
/// `fxx^2 + fyy^2 + fzz^2 + 2 fxy^2 + 2 fxz^2 + 2 fyz^2`.
pub fn bending_energy(ddf: &DisplacementField) -> Result<LossValue> {
    ddf.shape().require_min(3)?;
    let (value, _) = bending_value_grad(ddf.vectors(), ddf.shape(), false);
    Ok(LossValue::new(LossKind::Bending, value))
}

pub fn bending_energy_grad(ddf: &DisplacementField) -> Result<DisplacementField> {
    ddf.shape().require_min(3)?;
    let (_, grad) = bending_value_grad(ddf.vectors(), ddf.shape(), true);
    Ok(DisplacementField::from_parts(ddf.shape(), grad))
}

/// Mean over interior voxels of the entrywise L1 or squared-L2 norm of the
/// displacement Jacobian.
pub fn displacement_gradient_norm(ddf: &DisplacementField, norm: GradNorm) -> Result<LossValue> {
    ddf.shape().require_min(3)?;
    let (value, _) = gradient_norm_value_grad(ddf.vectors(), ddf.shape(), norm, false);
    let kind = match norm {
        GradNorm::L1 => LossKind::GradL1,
        GradNorm::L2 => LossKind::GradL2,
    };
    Ok(LossValue::new(kind, value))
}

/// Gradient of [`displacement_gradient_norm`]; the L1 subgradient is 0 where
/// a Jacobian entry is exactly 0.
pub fn displacement_gradient_norm_grad(
    ddf: &DisplacementField,
    norm: GradNorm,
) -> Result<DisplacementField> {
    ddf.shape().require_min(3)?;
    let (_, grad) = gradient_norm_value_grad(ddf.vectors(), ddf.shape(), norm, true);
    Ok(DisplacementField::from_parts(ddf.shape(), grad))
}
