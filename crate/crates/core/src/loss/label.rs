//! Label overlap scores and the TP/FP/FN comparison map.

use super::{LossKind, LossValue};
use crate::error::{Error, Result};
use crate::volume::Volume3;

/// Added to numerator and denominator so that empty-vs-empty scores 1.
pub const DEFAULT_DICE_SMOOTH: f64 = 1e-6;

/// Soft Dice score `(2 sum(a b) + s) / (sum(a) + sum(b) + s)`.
pub fn dice_score(a: &Volume3, b: &Volume3, smooth: f64) -> Result<LossValue> {
    a.require_same_layout(b, "dice")?;
    let (num, den) = dice_terms(a.data(), b.data(), smooth);
    Ok(LossValue::new(LossKind::DiceScore, num / den))
}

/// `1 - dice_score`.
pub fn dice_loss(a: &Volume3, b: &Volume3, smooth: f64) -> Result<LossValue> {
    let score = dice_score(a, b, smooth)?;
    Ok(LossValue::new(LossKind::DiceLoss, 1.0 - score.value))
}

/// `d dice_score(a, b) / d a`.
pub fn dice_score_grad(a: &Volume3, b: &Volume3, smooth: f64) -> Result<Volume3> {
    a.require_same_layout(b, "dice")?;
    let (num, den) = dice_terms(a.data(), b.data(), smooth);
    let grad = b
        .data()
        .iter()
        .map(|&y| (2.0 * y * den - num) / (den * den))
        .collect();
    Ok(Volume3::from_parts(a.shape(), a.channels(), grad))
}

fn dice_terms(a: &[f64], b: &[f64], smooth: f64) -> (f64, f64) {
    let inter: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let total: f64 = a.iter().sum::<f64>() + b.iter().sum::<f64>();
    (2.0 * inter + smooth, total + smooth)
}

const WHITE: [f64; 3] = [1.0, 1.0, 1.0];
const GREEN: [f64; 3] = [0.0, 1.0, 0.0];
const RED: [f64; 3] = [1.0, 0.0, 0.0];
const BLACK: [f64; 3] = [0.0, 0.0, 0.0];

/// Colour-codes a thresholded prediction against a binary truth mask:
/// white = true positive, green = false positive, red = false negative,
/// black = true negative. `pred > thresh` counts as positive; `truth` is
/// positive where it exceeds 0.5.
pub fn label_comparison_map(pred: &Volume3, truth: &Volume3, thresh: f64) -> Result<Volume3> {
    pred.require_same_layout(truth, "label comparison")?;
    if pred.channels() != 1 {
        return Err(Error::InvalidShape {
            shape: vec![pred.channels()],
            reason: "label comparison needs single-channel volumes".into(),
        });
    }
    let mut rgb = Vec::with_capacity(pred.len() * 3);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let colour = match (p > thresh, t > 0.5) {
            (true, true) => WHITE,
            (true, false) => GREEN,
            (false, true) => RED,
            (false, false) => BLACK,
        };
        rgb.extend_from_slice(&colour);
    }
    Ok(Volume3::from_parts(pred.shape(), 3, rgb))
}
