//! Segmentation losses over [pixels, classes] logit rows.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::autodiff::Var;
use crate::error::{err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Smoothing constant in the Dice numerator and denominator; keeps empty
/// classes away from 0/0.
pub const DICE_SMOOTHING: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BceDice,
    CeDice,
}

/// Binary cross-entropy (with logits) plus Dice, equally weighted.
///
/// Accepts single-logit rows or two-class rows; with two classes the
/// binary logit is the foreground-minus-background difference, which
/// makes sigmoid(logit) the two-class softmax foreground probability.
pub fn bce_dice_loss<T: Scalar>(logits: &Var<T>, target: &[u8]) -> Result<Var<T>> {
    let shape = logits.shape();
    let (pixels, classes) = (shape[0], shape[1]);
    if target.len() != pixels {
        return Err(err!(
            Shape,
            "bce_dice: {} target pixels vs {} logit rows",
            target.len(),
            pixels
        ));
    }
    if target.iter().any(|&t| t > 1) {
        return Err(err!(Data, "bce_dice: target mask is not binary"));
    }
    let z = match classes {
        1 => logits.clone(),
        2 => logits.slice_cols(1, 2).sub(&logits.slice_cols(0, 1)),
        k => {
            return Err(err!(
                Config,
                "bce_dice expects 1 or 2 logit channels, got {k}"
            ))
        }
    };
    let t = Var::constant(Tensor::from_vec(
        &[pixels, 1],
        target.iter().map(|&v| T::of_f64(v as f64)).collect(),
    ));
    // BCE(sigmoid(z), t) = t * softplus(-z) + (1 - t) * softplus(z)
    let one_minus_t = t.scale(-T::one()).add_scalar(T::one());
    let bce = t
        .mul(&z.neg().softplus())
        .add(&one_minus_t.mul(&z.softplus()))
        .mean();
    let dice = dice_term(&z.sigmoid(), &t);
    Ok(bce.add(&dice))
}

/// 1 - (2 * sum(p t) + eps) / (sum(p) + sum(t) + eps)
fn dice_term<T: Scalar>(p: &Var<T>, t: &Var<T>) -> Var<T> {
    let eps = T::of_f64(DICE_SMOOTHING);
    let num = p.mul(t).sum().scale(T::of_f64(2.0)).add_scalar(eps);
    let den = p.sum().add(&t.sum()).add_scalar(eps);
    num.div(&den).neg().add_scalar(T::one())
}

/// Softmax cross-entropy plus macro Dice over all classes, equally
/// weighted. Labels are integers in [0, classes).
pub fn ce_dice_loss<T: Scalar>(logits: &Var<T>, target: &[u8]) -> Result<Var<T>> {
    let shape = logits.shape();
    let (pixels, classes) = (shape[0], shape[1]);
    if target.len() != pixels {
        return Err(err!(
            Shape,
            "ce_dice: {} target pixels vs {} logit rows",
            target.len(),
            pixels
        ));
    }
    if target.iter().any(|&t| (t as usize) >= classes) {
        return Err(err!(
            Data,
            "ce_dice: label out of range for {classes} classes"
        ));
    }
    let labels: Arc<Vec<usize>> = Arc::new(target.iter().map(|&v| v as usize).collect());
    let ce = logits.cross_entropy_mean(labels);
    let probs = logits.softmax_rows();
    let mut dice_sum: Option<Var<T>> = None;
    for cls in 0..classes {
        let p_c = probs.slice_cols(cls, cls + 1);
        let t_c = Var::constant(Tensor::from_vec(
            &[pixels, 1],
            target
                .iter()
                .map(|&v| if v as usize == cls { T::one() } else { T::zero() })
                .collect(),
        ));
        let d = dice_term(&p_c, &t_c);
        dice_sum = Some(match dice_sum {
            None => d,
            Some(acc) => acc.add(&d),
        });
    }
    let dice = dice_sum
        .expect("at least one class")
        .scale(T::one() / T::of_f64(classes as f64));
    Ok(ce.add(&dice))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logit_rows(vals: &[f64], classes: usize) -> Var<f64> {
        Var::constant(Tensor::from_vec(&[vals.len() / classes, classes], vals.to_vec()))
    }

    #[test]
    fn bce_dice_hand_example() {
        // zero logits, 2x2 with half the target ones
        let logits = logit_rows(&[0.0; 4], 1);
        let loss = bce_dice_loss(&logits, &[1, 1, 0, 0]).unwrap().item();
        let want = (2.0f64).ln() + 0.4;
        assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
    }

    #[test]
    fn bce_dice_two_channel_matches_single() {
        // two-class rows whose difference is the same logit
        let single = logit_rows(&[0.3, -1.0, 2.0, 0.0], 1);
        let pair = logit_rows(&[0.1, 0.4, 0.5, -0.5, -1.0, 1.0, 0.2, 0.2], 2);
        let t = [1u8, 0, 1, 0];
        let a = bce_dice_loss(&single, &t).unwrap().item();
        let b = bce_dice_loss(&pair, &t).unwrap().item();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn bce_dice_saturates_to_zero() {
        let logits = logit_rows(&[40.0; 6], 1);
        let loss = bce_dice_loss(&logits, &[1; 6]).unwrap().item();
        // dice smoothing leaves 1 - 13/13 = 0
        assert!(loss.abs() < 1e-9, "{loss}");
    }

    #[test]
    fn bce_dice_is_permutation_invariant() {
        let vals = [0.3, -0.7, 1.2, 0.1, -2.0, 0.9];
        let t = [1u8, 0, 1, 1, 0, 0];
        let a = bce_dice_loss(&logit_rows(&vals, 1), &t).unwrap().item();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let vals_p: Vec<f64> = perm.iter().map(|&i| vals[i]).collect();
        let t_p: Vec<u8> = perm.iter().map(|&i| t[i]).collect();
        let b = bce_dice_loss(&logit_rows(&vals_p, 1), &t_p).unwrap().item();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn bce_dice_rejects_non_binary() {
        let logits = logit_rows(&[0.0; 2], 1);
        assert!(bce_dice_loss(&logits, &[0, 2]).is_err());
    }

    #[test]
    fn ce_dice_uniform_logits() {
        // K=2, balanced labels, uniform logits: CE = ln 2, per-class p = 0.5
        let logits = logit_rows(&[0.0; 8], 2);
        let loss = ce_dice_loss(&logits, &[0, 0, 1, 1]).unwrap().item();
        // each class: inter = 0.5*2 = 1, psum = 2, tsum = 2
        let dice = 1.0 - (2.0 + 1.0) / (2.0 + 2.0 + 1.0);
        let want = (2.0f64).ln() + dice;
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn ce_dice_perfect_prediction_tends_to_zero() {
        let logits = logit_rows(&[60.0, -60.0, -60.0, 60.0, 60.0, -60.0], 2);
        let loss = ce_dice_loss(&logits, &[0, 1, 0]).unwrap().item();
        assert!(loss.abs() < 1e-6, "{loss}");
    }

    #[test]
    fn ce_dice_logit_shift_invariance() {
        let vals = [0.3, -0.7, 1.2, 0.1, -2.0, 0.9];
        let t = [1u8, 0, 1];
        let a = ce_dice_loss(&logit_rows(&vals, 2), &t).unwrap().item();
        let shifted: Vec<f64> = vals
            .chunks(2)
            .flat_map(|row| row.iter().map(|v| v + 5.0))
            .collect();
        let b = ce_dice_loss(&logit_rows(&shifted, 2), &t).unwrap().item();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn ce_dice_rejects_out_of_range() {
        let logits = logit_rows(&[0.0; 4], 2);
        assert!(ce_dice_loss(&logits, &[0, 2]).is_err());
    }

    #[test]
    fn losses_are_nonnegative_on_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..12).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let t: Vec<u8> = (0..6).map(|_| rng.gen_range(0..2u8)).collect();
            let l1 = bce_dice_loss(&logit_rows(&vals, 2), &t).unwrap().item();
            let l2 = ce_dice_loss(&logit_rows(&vals, 2), &t).unwrap().item();
            assert!(l1.is_finite() && l1 >= 0.0);
            assert!(l2.is_finite() && l2 >= 0.0);
        }
    }
}
