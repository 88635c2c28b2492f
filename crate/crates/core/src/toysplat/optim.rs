//! Adam over position, log-scale and logit-opacity.
//!
//! This optimizer only moves parameters. Its moment estimates are separate
//! from the densification statistics in [`crate::moments`].

use serde::{Deserialize, Serialize};

use super::PrimitiveGrad;
use crate::primitives::{Lineage, Population};
use crate::scalar::Scalar;

/// Exponential interpolation from `initial` to `last` over `steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule<T> {
    pub initial: T,
    pub last: T,
    pub steps: u64,
}

impl<T: Scalar> LrSchedule<T> {
    pub fn constant(lr: T) -> Self {
        Self {
            initial: lr,
            last: lr,
            steps: 1,
        }
    }

    pub fn at(&self, step: u64) -> T {
        if self.initial == self.last || self.steps == 0 {
            return self.initial;
        }
        if self.initial <= T::zero() || self.last <= T::zero() {
            return self.initial;
        }
        let frac = T::from_u64(step.min(self.steps)).unwrap_or_else(T::zero)
            / T::from_u64(self.steps).unwrap_or_else(T::one);
        (self.initial.ln() * (T::one() - frac) + self.last.ln() * frac).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamOptimizer<T> {
    pub position_lr: LrSchedule<T>,
    pub scale_lr: T,
    pub opacity_lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    /// Scales are clamped to at least this value after each step.
    pub min_scale: T,
}

impl<T: Scalar> Default for ParamOptimizer<T> {
    fn default() -> Self {
        Self {
            position_lr: LrSchedule {
                initial: T::lit(1.6e-3),
                last: T::lit(1.6e-5),
                steps: 6000,
            },
            scale_lr: T::lit(5e-3),
            opacity_lr: T::lit(2.5e-2),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-15),
            min_scale: T::lit(1e-4),
        }
    }
}

/// Adam state over `[mu_x, mu_y, ln s, logit alpha]` for one primitive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamSlot<T> {
    pub m: [T; 4],
    pub v: [T; 4],
    pub t: u64,
}

impl<T: Scalar> ParamOptimizer<T> {
    /// One descent step. `slots` must be aligned with `pop`.
    ///
    /// Gradients are converted to the unconstrained parameterization by the
    /// chain rule; a parameter whose update is exactly zero is left
    /// bit-for-bit unchanged.
    pub fn step(
        &self,
        pop: &mut Population<T>,
        grads: &[PrimitiveGrad<T>],
        slots: &mut [AdamSlot<T>],
        step: u64,
    ) {
        assert_eq!(pop.len(), grads.len(), "gradient alignment");
        assert_eq!(pop.len(), slots.len(), "optimizer state alignment");
        let lrs = [
            self.position_lr.at(step),
            self.position_lr.at(step),
            self.scale_lr,
            self.opacity_lr,
        ];
        let one = T::one();
        for ((p, g), slot) in pop.primitives_mut().iter_mut().zip(grads).zip(slots.iter_mut()) {
            let raw = [
                g.position[0],
                g.position[1],
                g.scale * p.scale,
                g.opacity * p.opacity * (one - p.opacity),
            ];
            if raw.iter().any(|v| !v.is_finite()) {
                continue;
            }
            slot.t = slot.t.saturating_add(1);
            let t = T::from_u64(slot.t).unwrap_or_else(T::max_value);
            let c1 = one - self.beta1.powf(t);
            let c2 = one - self.beta2.powf(t);
            let mut delta = [T::zero(); 4];
            for k in 0..4 {
                slot.m[k] = self.beta1 * slot.m[k] + (one - self.beta1) * raw[k];
                slot.v[k] = self.beta2 * slot.v[k] + (one - self.beta2) * raw[k] * raw[k];
                let m_hat = slot.m[k] / c1;
                let v_hat = slot.v[k] / c2;
                delta[k] = lrs[k] * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.position[0] -= delta[0];
            p.position[1] -= delta[1];
            if delta[2] != T::zero() {
                p.scale = (p.scale.ln() - delta[2]).exp().max(self.min_scale);
            }
            if delta[3] != T::zero() {
                let logit = (p.opacity / (one - p.opacity)).ln() - delta[3];
                p.opacity = one / (one + (-logit).exp());
            }
        }
    }

    pub fn reindex(slots: &[AdamSlot<T>], lineage: &Lineage) -> Vec<AdamSlot<T>> {
        lineage.remap(slots, AdamSlot::default)
    }
}
