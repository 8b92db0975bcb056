//! Similarity, overlap, and regularisation losses with analytic gradients.

mod deform;
mod label;
mod similarity;

pub use deform::{
    bending_energy, bending_energy_grad, displacement_gradient_norm,
    displacement_gradient_norm_grad, GradNorm,
};
pub use label::{
    dice_loss, dice_score, dice_score_grad, label_comparison_map, DEFAULT_DICE_SMOOTH,
};
pub use similarity::{lncc, lncc_grad, ssd, ssd_grad, LnccConfig};

pub(crate) use deform::{bending_value_grad, gradient_norm_value_grad};
pub(crate) use similarity::{lncc_value_grad, ssd_value_grad};

/// Which loss produced a [`LossValue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Ssd,
    Lncc,
    DiceScore,
    DiceLoss,
    Bending,
    GradL1,
    GradL2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub kind: LossKind,
}

impl LossValue {
    pub(crate) fn new(kind: LossKind, value: f64) -> Self {
        LossValue { value, kind }
    }
}
