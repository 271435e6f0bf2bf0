//! Dice and binary cross-entropy losses on mask probabilities, and their sum.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::segmentation::{BinaryMask, MaskLogits};

/// Added to numerator and denominator of the Dice ratio.
pub const DICE_SMOOTHING: f64 = 1.0;
/// Probabilities are clamped to `[δ, 1 − δ]` before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("prediction is {prediction:?} but target is {target:?}")]
pub struct ShapeMismatch {
    pub prediction: (usize, usize),
    pub target: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub dice: f64,
    pub bce: f64,
    pub total: f64,
}

fn check(p: &Array2<f64>, y: &BinaryMask) -> Result<(), ShapeMismatch> {
    if p.dim() != y.dim() {
        return Err(ShapeMismatch {
            prediction: p.dim(),
            target: y.dim(),
        });
    }
    Ok(())
}

fn dice_terms(p: &Array2<f64>, y: &BinaryMask) -> (f64, f64) {
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_y = 0.0;
    Zip::from(p).and(y.as_array()).for_each(|&pi, &yi| {
        sum_p += pi;
        if yi {
            inter += pi;
            sum_y += 1.0;
        }
    });
    (2.0 * inter + DICE_SMOOTHING, sum_p + sum_y + DICE_SMOOTHING)
}

/// `1 − (2Σpy + ε) / (Σp + Σy + ε)`.
pub fn dice_loss(p: &Array2<f64>, y: &BinaryMask) -> Result<f64, ShapeMismatch> {
    check(p, y)?;
    let (num, den) = dice_terms(p, y);
    Ok(1.0 - num / den)
}

/// `−(1/N) Σ [y log p + (1 − y) log(1 − p)]` with `p` clamped.
pub fn bce_loss(p: &Array2<f64>, y: &BinaryMask) -> Result<f64, ShapeMismatch> {
    check(p, y)?;
    let n = p.len() as f64;
    let mut sum = 0.0;
    Zip::from(p).and(y.as_array()).for_each(|&pi, &yi| {
        let pc = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        sum += if yi { pc.ln() } else { (1.0 - pc).ln() };
    });
    Ok(-sum / n)
}

pub fn total_loss(logits: &MaskLogits, gt: &BinaryMask) -> Result<LossValue, ShapeMismatch> {
    total_loss_with_grad(logits.values(), gt).map(|(v, _)| v)
}

/// Loss and its gradient with respect to the logits.
pub fn total_loss_with_grad(logits: &Array2<f64>, gt: &BinaryMask) -> Result<(LossValue, Array2<f64>), ShapeMismatch> {
    let p = logits.mapv(sigmoid);
    check(&p, gt)?;
    let dice = dice_loss(&p, gt)?;
    let bce = bce_loss(&p, gt)?;
    let (a, b) = dice_terms(&p, gt);
    let n = p.len() as f64;
    let mut grad = Array2::zeros(p.dim());
    Zip::from(&mut grad)
        .and(&p)
        .and(gt.as_array())
        .for_each(|g, &pi, &yi| {
            let y = if yi { 1.0 } else { 0.0 };
            let d_dice = -(2.0 * y * b - a) / (b * b);
            let d_bce = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pi) {
                -(y / pi - (1.0 - y) / (1.0 - pi)) / n
            } else {
                0.0
            };
            *g = (d_dice + d_bce) * pi * (1.0 - pi);
        });
    Ok((
        LossValue {
            dice,
            bce,
            total: dice + bce,
        },
        grad,
    ))
}
