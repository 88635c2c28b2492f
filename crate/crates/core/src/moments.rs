//! Streaming per-primitive gradient statistics.
//!
//! Each primitive keeps an exponential moving average of its raw positional
//! gradient (`m`) and of the element-wise squared gradient (`v`). Bias
//! correction uses the primitive's own update count, not the global step, so
//! a child created late in training is corrected as if it were at step 1.
//!
//! The intrinsic SNR `|m_hat|_2 / (sqrt(|v_hat|_1) + eps)` is close to 1 for a
//! coherent gradient stream and falls as the stream becomes dominated by
//! zero-mean fluctuations, which cancel in `m` but not in `v`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{is_finite2, norm2, Scalar, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig<T> {
    pub beta1: T,
    pub beta2: T,
    /// Guard added to the SNR denominator.
    pub epsilon: T,
}

impl<T: Scalar> Default for MomentConfig<T> {
    fn default() -> Self {
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }
}

impl<T: Scalar> MomentConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: T| b > T::zero() && b < T::one();
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::InvalidConfig(format!(
                "moment decays must lie in (0, 1), got beta1={} beta2={}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentState<T> {
    pub m: Vec2<T>,
    pub v: Vec2<T>,
    /// Number of updates applied; the `t` of bias correction.
    pub steps: u64,
}

impl<T: Scalar> MomentState<T> {
    pub fn fresh() -> Self {
        Self {
            m: [T::zero(); 2],
            v: [T::zero(); 2],
            steps: 0,
        }
    }

    /// Returns the state after observing gradient `g`.
    pub fn update(&self, g: Vec2<T>, cfg: &MomentConfig<T>) -> Result<Self, NonFinite> {
        if !is_finite2(g) {
            return Err(NonFinite);
        }
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let mut next = *self;
        for k in 0..2 {
            next.m[k] = b1 * self.m[k] + (T::one() - b1) * g[k];
            next.v[k] = b2 * self.v[k] + (T::one() - b2) * (g[k] * g[k]);
        }
        next.steps = self.steps.saturating_add(1);
        Ok(next)
    }

    /// Bias-corrected `(m_hat, v_hat)`.
    pub fn bias_corrected(&self, cfg: &MomentConfig<T>) -> Result<(Vec2<T>, Vec2<T>)> {
        if self.steps == 0 {
            return Err(Error::UndefinedCorrection);
        }
        let t = T::from_u64(self.steps).unwrap_or_else(T::max_value);
        let c1 = T::one() - cfg.beta1.powf(t);
        let c2 = T::one() - cfg.beta2.powf(t);
        Ok((
            [self.m[0] / c1, self.m[1] / c1],
            [self.v[0] / c2, self.v[1] / c2],
        ))
    }

    /// `|m_hat|_2`, the quantity ranked by the quantile gate.
    pub fn momentum_norm(&self, cfg: &MomentConfig<T>) -> Result<T> {
        let (m_hat, _) = self.bias_corrected(cfg)?;
        Ok(norm2(m_hat))
    }

    pub fn intrinsic_snr(&self, cfg: &MomentConfig<T>) -> Result<T> {
        let (m_hat, v_hat) = self.bias_corrected(cfg)?;
        let power = v_hat[0] + v_hat[1];
        Ok(norm2(m_hat) / (power.sqrt() + cfg.epsilon))
    }
}

/// Marker error for a rejected non-finite gradient; the caller knows the id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFinite;

/// Indices whose gradients were rejected during a batch update.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchReport {
    pub poisoned: Vec<usize>,
}

/// Applies `update` element-wise. Poisoned entries keep their prior state and
/// are reported by index.
pub fn batch_update<T: Scalar>(
    states: &mut [MomentState<T>],
    grads: &[Vec2<T>],
    cfg: &MomentConfig<T>,
) -> Result<BatchReport> {
    check_aligned(states.len(), grads.len())?;
    let mut report = BatchReport::default();
    for (i, (s, g)) in states.iter_mut().zip(grads).enumerate() {
        match s.update(*g, cfg) {
            Ok(next) => *s = next,
            Err(NonFinite) => report.poisoned.push(i),
        }
    }
    Ok(report)
}

/// Parallel variant of [`batch_update`]; results are identical because each
/// element is an independent transform.
pub fn par_batch_update<T: Scalar>(
    states: &mut [MomentState<T>],
    grads: &[Vec2<T>],
    cfg: &MomentConfig<T>,
) -> Result<BatchReport> {
    check_aligned(states.len(), grads.len())?;
    let flags: Vec<bool> = states
        .par_iter_mut()
        .zip(grads.par_iter())
        .map(|(s, g)| match s.update(*g, cfg) {
            Ok(next) => {
                *s = next;
                false
            }
            Err(NonFinite) => true,
        })
        .collect();
    Ok(BatchReport {
        poisoned: flags
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| p.then_some(i))
            .collect(),
    })
}

fn check_aligned(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Alignment { expected, got });
    }
    Ok(())
}
