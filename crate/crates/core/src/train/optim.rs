//! AdamW with decoupled weight decay and the cosine learning-rate
//! schedule.

use crate::autodiff::Var;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// lr(e) = min + (init - min) * (1 + cos(pi * e / t_max)) / 2, in f64
/// regardless of the training scalar type.
pub fn cosine_lr(epoch: usize, initial_lr: f64, min_lr: f64, t_max: usize) -> f64 {
    let t = epoch as f64 / t_max.max(1) as f64;
    min_lr + 0.5 * (initial_lr - min_lr) * (1.0 + (std::f64::consts::PI * t).cos())
}

pub struct AdamW<T: Scalar> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &[(String, Var<T>)], weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: params
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value().shape()))
                .collect(),
            v: params
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value().shape()))
                .collect(),
        }
    }

    /// One update over all parameters; missing gradients count as zero,
    /// so the only change for a gradient-free parameter is the decoupled
    /// decay term -lr * wd * theta.
    pub fn step(&mut self, params: &[(String, Var<T>)], lr: f64) {
        self.step += 1;
        let b1 = T::of_f64(self.beta1);
        let b2 = T::of_f64(self.beta2);
        let bc1 = T::of_f64(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = T::of_f64(1.0 - self.beta2.powi(self.step as i32));
        let lr_t = T::of_f64(lr);
        let wd = T::of_f64(self.weight_decay);
        let eps = T::of_f64(self.eps);
        for (i, (_, p)) in params.iter().enumerate() {
            let grad = p.grad();
            let mut theta = p.value().clone();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for idx in 0..theta.len() {
                let g = grad.as_ref().map_or(T::zero(), |g| g.data()[idx]);
                let mi = b1 * m.data()[idx] + (T::one() - b1) * g;
                let vi = b2 * v.data()[idx] + (T::one() - b2) * g * g;
                m.data_mut()[idx] = mi;
                v.data_mut()[idx] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let t = theta.data()[idx];
                theta.data_mut()[idx] = t - lr_t * (m_hat / (v_hat.sqrt() + eps) + wd * t);
            }
            p.set_value(theta);
        }
    }
}
