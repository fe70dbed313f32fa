//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Var;
use crate::data::{derive_seed, salts};
use crate::error::Result;
use crate::metrics::Mask;
use crate::net::{chw_to_rows, Model, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::loss::{bce_dice_loss, ce_dice_loss};

/// Worst relative error between analytic gradients and central finite
/// differences over up to `samples` randomly chosen parameter
/// coordinates. `params` must be the leaves the loss builder reads; the
/// builder is re-run for every probe so perturbed values take effect.
pub fn finite_diff_max_rel_err<T: Scalar>(
    params: &[(String, Var<T>)],
    mut build_loss: impl FnMut() -> Var<T>,
    eps: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    for (_, p) in params {
        p.zero_grad();
    }
    let loss = build_loss();
    loss.backward();
    let grads: Vec<Tensor<T>> = params
        .iter()
        .map(|(_, p)| {
            p.grad()
                .unwrap_or_else(|| Tensor::zeros(p.value().shape()))
        })
        .collect();
    let total: usize = params.iter().map(|(_, p)| p.value().len()).sum();
    let mut coords: Vec<usize> = (0..total).collect();
    if samples < total {
        for i in 0..samples {
            let j = rng.gen_range(i..total);
            coords.swap(i, j);
        }
        coords.truncate(samples);
    }
    let mut worst = 0.0f64;
    for flat in coords {
        // locate (param, index)
        let mut offset = flat;
        let mut pi = 0;
        while offset >= params[pi].1.value().len() {
            offset -= params[pi].1.value().len();
            pi += 1;
        }
        let p = &params[pi].1;
        let original = p.value().clone();
        let mut eval = |delta: f64| -> f64 {
            let mut t = original.clone();
            t.data_mut()[offset] += T::of_f64(delta);
            p.set_value(t);
            build_loss().item().as_f64()
        };
        let f_plus = eval(eps);
        let f_minus = eval(-eps);
        p.set_value(original);
        let fd = (f_plus - f_minus) / (2.0 * eps);
        let an = grads[pi].data()[offset].as_f64();
        let denom = an.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(((an - fd) / denom).abs());
    }
    worst
}

/// Gradient check of the full network against central finite differences
/// on one random input/target. Runs in f64; returns the worst relative
/// error over at least `samples` coordinates (all coordinates when the
/// model is smaller).
pub fn grad_check(config: ModelConfig, eps: f64, samples: usize, seed: u64) -> Result<f64> {
    let model = Model::<f64>::init(config, derive_seed(seed, salts::INIT))?;
    let cfg = model.config.clone();
    let (h, w) = cfg.input_resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, salts::GRADCHECK));
    let image = Tensor::<f64>::uniform(&[cfg.input_channels, h, w], 1.0, &mut rng);
    let labels: Vec<u8> = (0..h * w)
        .map(|_| rng.gen_range(0..cfg.num_classes as u8))
        .collect();
    let mask = Mask::new(h, w, labels);
    let rows = chw_to_rows(&image);
    let build = || {
        let input = Var::constant(rows.clone());
        let logits = model.forward_rows(&input, None).expect("validated config");
        if cfg.num_classes <= 2 {
            bce_dice_loss(&logits, &mask.labels).expect("validated mask")
        } else {
            ce_dice_loss(&logits, &mask.labels).expect("validated mask")
        }
    };
    Ok(finite_diff_max_rel_err(
        model.named_params(),
        build,
        eps,
        samples,
        &mut rng,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_is_exact() {
        // purely linear map: central differences are exact up to rounding
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = Var::param(Tensor::<f64>::uniform(&[3, 2], 1.0, &mut rng));
        let b = Var::param(Tensor::<f64>::uniform(&[2], 1.0, &mut rng));
        let x = Tensor::<f64>::uniform(&[4, 3], 1.0, &mut rng);
        let params = vec![("w".to_string(), w.clone()), ("b".to_string(), b.clone())];
        let build = || Var::constant(x.clone()).matmul(&w).bias_add(&b).sum();
        let err = finite_diff_max_rel_err(&params, build, 1e-3, 1000, &mut rng);
        assert!(err <= 1e-6, "linear model error {err}");
    }

    #[test]
    fn error_shrinks_with_eps() {
        // a smooth nonlinear scalar function shows the order-2 trend
        let w = Var::param(Tensor::from_vec(&[1], vec![0.8f64]));
        let params = vec![("w".to_string(), w.clone())];
        let build = || w.exp().mul(&w.sigmoid()).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e1 = finite_diff_max_rel_err(&params, &build, 1e-2, 10, &mut rng);
        let e2 = finite_diff_max_rel_err(&params, &build, 5e-3, 10, &mut rng);
        assert!(e2 < e1, "eps halved should shrink error: {e1} -> {e2}");
    }
}
