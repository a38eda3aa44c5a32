//! Adam optimizer over a subset of a parameter set.
//!
//! Each optimizer owns first/second-moment state for the parameter ids it
//! was built with, so several optimizers with different learning rates can
//! drive disjoint (or overlapping, if the training scheme wants it) slices
//! of one [`ParamSet`]. A step consumes the set's accumulated gradients and
//! clears all of them, which keeps one optimizer's update from replaying
//! gradients meant for another.

use super::params::{ParamId, ParamSet};
use super::TensorError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig<R> {
    pub lr: R,
    pub beta1: R,
    pub beta2: R,
    pub eps: R,
}

impl<R: Real> AdamConfig<R> {
    pub fn with_lr(lr: R) -> Self {
        Self {
            lr,
            beta1: R::of(0.9),
            beta2: R::of(0.999),
            eps: R::of(1e-8),
        }
    }
}

#[derive(Debug)]
pub struct Adam<R> {
    config: AdamConfig<R>,
    ids: Vec<ParamId>,
    /// First-moment estimates, parallel to `ids`.
    m: Vec<Vec<R>>,
    /// Second-moment estimates, parallel to `ids`.
    v: Vec<Vec<R>>,
    step: u64,
}

impl<R: Real> Adam<R> {
    /// Creates an optimizer over `ids`, sized against the set's current
    /// parameter shapes.
    pub fn new(config: AdamConfig<R>, set: &ParamSet<R>, ids: Vec<ParamId>) -> Self {
        let m = ids.iter().map(|&id| vec![R::zero(); set.value(id).numel()]).collect();
        let v = ids.iter().map(|&id| vec![R::zero(); set.value(id).numel()]).collect();
        Self { config, ids, m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update from the set's accumulated
    /// gradients, then zeroes every gradient in the set.
    ///
    /// Errors if no backward pass has populated gradients since the last
    /// step — calling this without a recorded loss is a sequencing bug, not
    /// a no-op.
    pub fn step(&mut self, set: &mut ParamSet<R>) -> Result<(), TensorError> {
        if !set.grads_populated() {
            return Err(TensorError::GradientsMissing);
        }
        self.step += 1;
        let t = R::of(self.step as f64);
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let bias1 = R::one() - b1.powf(t);
        let bias2 = R::one() - b2.powf(t);
        for (k, &id) in self.ids.iter().enumerate() {
            // Copy the gradient out first so the later value update can
            // borrow the set mutably.
            let grad: Vec<R> = set.grad(id).data().to_vec();
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            let value = set.value_mut(id);
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (R::one() - b1) * g;
                v[i] = b2 * v[i] + (R::one() - b2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                value.data_mut()[i] -= self.config.lr * m_hat / (v_hat.sqrt() + self.config.eps);
            }
        }
        set.zero_grads();
        Ok(())
    }
}
