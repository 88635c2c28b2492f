//! Density-control policies and the structural operators they drive.
//!
//! Two selection rules are implemented:
//!
//! * **Baseline**: the K-step mean of positional gradient norms is compared
//!   against a fixed threshold `tau_pos`. Norms discard direction, so zero-mean
//!   noise raises the statistic as much as coherent drift does.
//! * **Gated (momentum/quantile/SNR)**: a primitive is densified only if its
//!   bias-corrected momentum norm is strictly above the population's `tau_q`
//!   quantile *and* its intrinsic SNR is strictly above `tau_snr`.
//!
//! Both feed the same action rule (split when `scale > tau_scale`, clone
//! otherwise) and the same split/clone/prune operators. Structural operators
//! process candidates in ascending id order, which makes the growth cap
//! deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{MomentConfig, MomentState};
use crate::primitives::{Lineage, Origin, Population, Primitive, PrimitiveId};
use crate::scalar::{norm2, Scalar, Vec2};
use crate::stats::quantile;

/// Opacity assigned by both reset flavours.
pub const RESET_OPACITY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig<T> {
    pub tau_q: T,
    pub tau_snr: T,
    /// Baseline threshold on the K-step mean gradient norm.
    pub tau_pos: T,
    /// Split above this scale, clone at or below it.
    pub tau_scale: T,
    /// Steps between densification calls (K).
    pub densify_interval: u64,
    pub prune_opacity: T,
    pub prune_scale_max: T,
    /// Steps between opacity resets; 0 disables resets.
    pub reset_interval: u64,
    pub warmup_steps: u64,
    pub max_primitives: usize,
    pub split_factor: T,
    /// Fixed momentum-norm threshold used by the momentum-only ablation.
    pub momentum_threshold: T,
}

impl<T: Scalar> Default for ControllerConfig<T> {
    fn default() -> Self {
        Self {
            tau_q: T::lit(0.9),
            tau_snr: T::lit(0.1),
            tau_pos: T::lit(2e-4),
            tau_scale: T::lit(0.01),
            densify_interval: 100,
            prune_opacity: T::lit(0.005),
            prune_scale_max: T::lit(0.5),
            reset_interval: 3000,
            warmup_steps: 500,
            max_primitives: 200_000,
            split_factor: T::lit(1.6),
            momentum_threshold: T::lit(2e-4),
        }
    }
}

impl<T: Scalar> ControllerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.tau_q > T::zero() && self.tau_q < T::one()) {
            return bad("tau_q must lie in (0, 1)");
        }
        if !(self.tau_snr >= T::zero()) || !(self.tau_pos >= T::zero()) {
            return bad("tau_snr and tau_pos must be non-negative");
        }
        if !(self.momentum_threshold >= T::zero()) {
            return bad("momentum_threshold must be non-negative");
        }
        if !(self.tau_scale > T::zero()) || !(self.prune_scale_max > T::zero()) {
            return bad("scale thresholds must be positive");
        }
        if !(self.prune_opacity >= T::zero() && self.prune_opacity < T::one()) {
            return bad("prune_opacity must lie in [0, 1)");
        }
        if self.densify_interval == 0 {
            return bad("densify_interval must be at least 1");
        }
        if !(self.split_factor > T::one()) {
            return bad("split_factor must exceed 1");
        }
        if self.max_primitives == 0 {
            return bad("max_primitives must be positive");
        }
        Ok(())
    }
}

/// Running per-primitive gradient-norm sums since the last selection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineState<T> {
    pub accum_norm: Vec<T>,
    pub accum_count: Vec<u64>,
}

impl<T: Scalar> BaselineState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            accum_norm: vec![T::zero(); n],
            accum_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.accum_norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accum_norm.is_empty()
    }

    /// Adds `|g_i|_2` to every accumulator. Non-finite gradients are skipped
    /// (the primitive is flagged elsewhere).
    pub fn accumulate(&mut self, grads: &[Vec2<T>]) -> Result<()> {
        if grads.len() != self.len() {
            return Err(Error::Alignment {
                expected: self.len(),
                got: grads.len(),
            });
        }
        for ((acc, count), g) in self
            .accum_norm
            .iter_mut()
            .zip(self.accum_count.iter_mut())
            .zip(grads)
        {
            let n = norm2(*g);
            if n.is_finite() {
                *acc += n;
                *count += 1;
            }
        }
        Ok(())
    }

    /// K-step mean gradient norm per primitive (zero where nothing was seen).
    pub fn means(&self) -> Vec<T> {
        self.accum_norm
            .iter()
            .zip(&self.accum_count)
            .map(|(&a, &c)| {
                if c == 0 {
                    T::zero()
                } else {
                    a / T::from_u64(c).unwrap_or_else(T::one)
                }
            })
            .collect()
    }

    /// Selects `mean > tau_pos` among eligible primitives, then clears the
    /// accumulators.
    pub fn select(&mut self, tau_pos: T, eligible: &[bool]) -> Vec<bool> {
        let mask = self
            .means()
            .into_iter()
            .zip(&self.accum_count)
            .zip(eligible)
            .map(|((mean, &c), &ok)| ok && c > 0 && mean > tau_pos)
            .collect();
        self.reset();
        mask
    }

    pub fn reset(&mut self) {
        self.accum_norm.iter_mut().for_each(|a| *a = T::zero());
        self.accum_count.iter_mut().for_each(|c| *c = 0);
    }

    pub fn reindex(&mut self, lineage: &Lineage) {
        self.accum_norm = lineage.remap(&self.accum_norm, T::zero);
        self.accum_count = lineage.remap(&self.accum_count, || 0);
    }
}

/// Outcome of the quantile/SNR gate before actions are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome<T> {
    pub densify_mask: Vec<bool>,
    /// Realized momentum-norm threshold; `None` when no primitive had data.
    pub quantile_value: Option<T>,
    pub momentum_norms: Vec<T>,
    /// NaN for primitives without any update yet.
    pub snr_values: Vec<T>,
}

/// Quantile-and-SNR selection.
///
/// The quantile is taken over every primitive with at least one moment update
/// and a finite statistic; `eligible` then restricts who may be selected.
/// With a single primitive the quantile equals its own norm, so the strict
/// comparison rejects it.
pub fn cadam_select<T: Scalar>(
    states: &[MomentState<T>],
    eligible: &[bool],
    cfg: &ControllerConfig<T>,
    moments: &MomentConfig<T>,
) -> Result<GateOutcome<T>> {
    if states.len() != eligible.len() {
        return Err(Error::Alignment {
            expected: states.len(),
            got: eligible.len(),
        });
    }
    let mut norms = Vec::with_capacity(states.len());
    let mut snrs = Vec::with_capacity(states.len());
    for s in states {
        match s.bias_corrected(moments) {
            Ok((m_hat, v_hat)) => {
                let n = norm2(m_hat);
                norms.push(n);
                snrs.push(n / ((v_hat[0] + v_hat[1]).sqrt() + moments.epsilon));
            }
            Err(_) => {
                norms.push(T::nan());
                snrs.push(T::nan());
            }
        }
    }
    let ranked: Vec<T> = norms.iter().copied().filter(|n| n.is_finite()).collect();
    let q = quantile(&ranked, cfg.tau_q);
    let densify_mask = match q {
        None => vec![false; states.len()],
        Some(q) => norms
            .iter()
            .zip(&snrs)
            .zip(eligible)
            .map(|((&n, &snr), &ok)| ok && n > q && snr > cfg.tau_snr)
            .collect(),
    };
    Ok(GateOutcome {
        densify_mask,
        quantile_value: q,
        momentum_norms: norms,
        snr_values: snrs,
    })
}

/// Momentum-only ablation: `|m_hat| > momentum_threshold`, no quantile or SNR.
pub fn momentum_only_select<T: Scalar>(
    states: &[MomentState<T>],
    eligible: &[bool],
    threshold: T,
    moments: &MomentConfig<T>,
) -> Vec<bool> {
    states
        .iter()
        .zip(eligible)
        .map(|(s, &ok)| ok && s.momentum_norm(moments).is_ok_and(|n| n > threshold))
        .collect()
}

/// Splits `densify_mask` into `(split_mask, clone_mask)` by scale.
pub fn decide_actions<T: Scalar>(
    densify_mask: &[bool],
    pop: &Population<T>,
    cfg: &ControllerConfig<T>,
) -> (Vec<bool>, Vec<bool>) {
    densify_mask
        .iter()
        .zip(pop.primitives())
        .map(|(&d, p)| {
            let split = p.scale > cfg.tau_scale;
            (d && split, d && !split)
        })
        .unzip()
}

/// What a densification pass actually did.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Growth {
    pub lineage: Lineage,
    pub split: Vec<PrimitiveId>,
    pub cloned: Vec<PrimitiveId>,
    /// Candidates dropped because the growth cap was reached.
    pub skipped: usize,
    pub cap_hit: bool,
}

/// Applies splits and clones together, visiting candidates by ascending id.
///
/// A split replaces its parent with two children sampled from the parent's
/// Gaussian at `scale / split_factor`; a clone appends an exact copy. Both
/// add one primitive. Once another addition would exceed `max_primitives`,
/// remaining candidates are skipped and `cap_hit` is set.
pub fn apply_densify<T: Scalar, R: Rng + ?Sized>(
    pop: &mut Population<T>,
    split_mask: &[bool],
    clone_mask: &[bool],
    cfg: &ControllerConfig<T>,
    rng: &mut R,
) -> Result<Growth> {
    let n = pop.len();
    for m in [split_mask, clone_mask] {
        if m.len() != n {
            return Err(Error::Alignment {
                expected: n,
                got: m.len(),
            });
        }
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| split_mask[i] || clone_mask[i]).collect();
    order.sort_by_key(|&i| pop.ids()[i]);

    let mut count = n;
    let mut do_split = vec![false; n];
    let mut do_clone = vec![false; n];
    let mut growth = Growth::default();
    for i in order {
        if count + 1 > cfg.max_primitives {
            growth.skipped += 1;
            growth.cap_hit = true;
            continue;
        }
        count += 1;
        if split_mask[i] {
            do_split[i] = true;
            growth.split.push(pop.ids()[i]);
        } else {
            do_clone[i] = true;
            growth.cloned.push(pop.ids()[i]);
        }
    }

    let prims = pop.primitives().to_vec();
    let mut slots: Vec<(Origin, Primitive<T>)> = Vec::with_capacity(count);
    for (i, p) in prims.iter().enumerate() {
        if !do_split[i] {
            slots.push((Origin::Kept(i), *p));
        }
    }
    // New primitives are appended in the same id order the cap was applied in.
    let mut fresh_order: Vec<usize> = (0..n).filter(|&i| do_split[i] || do_clone[i]).collect();
    fresh_order.sort_by_key(|&i| pop.ids()[i]);
    for i in fresh_order {
        let parent = prims[i];
        if do_split[i] {
            let child_scale = parent.scale / cfg.split_factor;
            for _ in 0..2 {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                let pos = [
                    parent.position[0] + parent.scale * T::lit(dx),
                    parent.position[1] + parent.scale * T::lit(dy),
                ];
                slots.push((
                    Origin::Fresh { parent: i },
                    Primitive::new(pos, child_scale, parent.opacity),
                ));
            }
        } else {
            slots.push((
                Origin::Fresh { parent: i },
                Primitive::new(parent.position, parent.scale, parent.opacity),
            ));
        }
    }
    growth.lineage = pop.rebuild(slots);
    Ok(growth)
}

/// Splits the masked primitives (no clones).
pub fn apply_split<T: Scalar, R: Rng + ?Sized>(
    pop: &mut Population<T>,
    mask: &[bool],
    cfg: &ControllerConfig<T>,
    rng: &mut R,
) -> Result<Growth> {
    let none = vec![false; pop.len()];
    apply_densify(pop, mask, &none, cfg, rng)
}

/// Clones the masked primitives (no splits). Needs no randomness.
pub fn apply_clone<T: Scalar>(
    pop: &mut Population<T>,
    mask: &[bool],
    cfg: &ControllerConfig<T>,
) -> Result<Growth> {
    let none = vec![false; pop.len()];
    // Clones never sample, so the generator is never advanced.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    apply_densify(pop, &none, mask, cfg, &mut rng)
}

/// Removes primitives with `opacity < prune_opacity` or `scale > prune_scale_max`.
pub fn prune<T: Scalar>(
    pop: &mut Population<T>,
    cfg: &ControllerConfig<T>,
) -> (Lineage, Vec<PrimitiveId>) {
    let mut removed = Vec::new();
    let mut slots = Vec::with_capacity(pop.len());
    for (i, (id, p)) in pop.iter().enumerate() {
        if p.opacity < cfg.prune_opacity || p.scale > cfg.prune_scale_max {
            removed.push(id);
        } else {
            slots.push((Origin::Kept(i), *p));
        }
    }
    let lineage = pop.rebuild(slots);
    (lineage, removed)
}

/// Sets opacity to [`RESET_OPACITY`] for every primitive whose SNR is below
/// `tau_snr`, leaving all other fields and all moment states alone. No-op
/// before `warmup_steps`. Primitives without moment history are skipped.
pub fn selective_opacity_reset<T: Scalar>(
    pop: &mut Population<T>,
    states: &[MomentState<T>],
    cfg: &ControllerConfig<T>,
    moments: &MomentConfig<T>,
    step: u64,
) -> Result<Vec<PrimitiveId>> {
    if states.len() != pop.len() {
        return Err(Error::Alignment {
            expected: pop.len(),
            got: states.len(),
        });
    }
    if step < cfg.warmup_steps {
        return Ok(Vec::new());
    }
    let reset_to = T::lit(RESET_OPACITY);
    let ids = pop.ids().to_vec();
    let mut reset = Vec::new();
    for ((p, s), id) in pop.primitives_mut().iter_mut().zip(states).zip(ids) {
        if let Ok(snr) = s.intrinsic_snr(moments) {
            if snr < cfg.tau_snr {
                p.opacity = reset_to;
                reset.push(id);
            }
        }
    }
    Ok(reset)
}

/// Clamps every opacity to at most [`RESET_OPACITY`]. No-op before warm-up.
/// Returns the ids whose opacity changed.
pub fn global_opacity_reset<T: Scalar>(
    pop: &mut Population<T>,
    cfg: &ControllerConfig<T>,
    step: u64,
) -> Vec<PrimitiveId> {
    if step < cfg.warmup_steps {
        return Vec::new();
    }
    let reset_to = T::lit(RESET_OPACITY);
    let ids = pop.ids().to_vec();
    let mut changed = Vec::new();
    for (p, id) in pop.primitives_mut().iter_mut().zip(ids) {
        if p.opacity > reset_to {
            p.opacity = reset_to;
            changed.push(id);
        }
    }
    changed
}

/// Primitives old enough to be judged this round and not flagged as
/// poisoned since the last call.
pub fn eligibility<T: Scalar>(pop: &Population<T>, min_age: u64, poisoned: &[bool]) -> Vec<bool> {
    pop.primitives()
        .iter()
        .zip(poisoned)
        .map(|(p, &bad)| p.age >= min_age && !bad)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{spawn_initial, Layout};

    fn cfg() -> ControllerConfig<f64> {
        ControllerConfig::default()
    }

    fn state_with_constant(g: Vec2<f64>, steps: usize) -> MomentState<f64> {
        let mc = MomentConfig::default();
        (0..steps).fold(MomentState::fresh(), |s, _| s.update(g, &mc).unwrap())
    }

    #[test]
    fn baseline_mean_of_constant_norm() {
        let mut b = BaselineState::<f64>::new(1);
        for _ in 0..10 {
            b.accumulate(&[[3.0, 4.0]]).unwrap();
        }
        assert!((b.means()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_ignores_sign() {
        let mut b = BaselineState::<f64>::new(1);
        for t in 0..100 {
            let g = if t % 2 == 0 { [1.0, 0.0] } else { [-1.0, 0.0] };
            b.accumulate(&[g]).unwrap();
        }
        assert_eq!(b.means()[0], 1.0);
        let mut z = BaselineState::<f64>::new(2);
        for _ in 0..100 {
            z.accumulate(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        }
        assert_eq!(z.means(), vec![0.0, 0.0]);
    }

    #[test]
    fn baseline_threshold_and_reset() {
        let mut b = BaselineState::<f64>::new(3);
        b.accumulate(&[[0.1, 0.0], [0.0, 0.5], [0.9, 0.0]]).unwrap();
        let mask = b.select(0.4, &[true; 3]);
        assert_eq!(mask, vec![false, true, true]);
        assert!(b.accum_norm.iter().all(|&a| a == 0.0));
        assert!(b.accum_count.iter().all(|&c| c == 0));
        assert!(b.accumulate(&[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn baseline_zero_threshold_selects_any_nonzero() {
        let mut b = BaselineState::<f64>::new(3);
        b.accumulate(&[[0.0, 0.0], [1e-9, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(b.select(0.0, &[true; 3]), vec![false, true, true]);
    }

    #[test]
    fn gate_on_linear_norms() {
        let mc = MomentConfig::default();
        let states: Vec<_> = (1..=10)
            .map(|k| state_with_constant([k as f64, 0.0], 5))
            .collect();
        let out = cadam_select(&states, &[true; 10], &cfg(), &mc).unwrap();
        assert!((out.quantile_value.unwrap() - 9.1).abs() < 1e-9);
        let expected: Vec<bool> = (1..=10).map(|k| k == 10).collect();
        assert_eq!(out.densify_mask, expected);
    }

    #[test]
    fn identical_norms_select_nothing() {
        let mc = MomentConfig::default();
        let states = vec![state_with_constant([1.0, 1.0], 3); 20];
        let out = cadam_select(&states, &[true; 20], &cfg(), &mc).unwrap();
        assert!(out.densify_mask.iter().all(|&d| !d));
        let single = vec![state_with_constant([1.0, 1.0], 3)];
        let out = cadam_select(&single, &[true], &cfg(), &mc).unwrap();
        assert_eq!(out.densify_mask, vec![false]);
    }

    #[test]
    fn actions_split_by_scale_with_strict_boundary() {
        let mut pop = spawn_initial::<f64>(3, Layout::Grid, 0, 0.01, 0.5).unwrap();
        pop.primitives_mut()[0].scale = 0.05;
        pop.primitives_mut()[1].scale = 0.005;
        pop.primitives_mut()[2].scale = 0.01;
        let (split, clone) = decide_actions(&[true, true, true], &pop, &cfg());
        assert_eq!(split, vec![true, false, false]);
        assert_eq!(clone, vec![false, true, true]);
    }

    #[test]
    fn split_replaces_parent_with_two_children() {
        let mut pop = Population::from_primitives(vec![Primitive::new([0.5, 0.5], 0.1, 0.4)]);
        pop.primitives_mut()[0].age = 17;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = apply_split(&mut pop, &[true], &cfg(), &mut rng).unwrap();
        assert_eq!(pop.len(), 2);
        assert_eq!(g.split, vec![0]);
        assert_eq!(pop.ids(), &[1, 2]);
        for p in pop.primitives() {
            assert!((p.scale - 0.0625).abs() < 1e-15);
            assert_eq!(p.opacity, 0.4);
            assert_eq!(p.age, 0);
            let d = norm2([p.position[0] - 0.5, p.position[1] - 0.5]);
            assert!(d < 0.4);
        }
        assert_eq!(
            g.lineage.origins,
            vec![Origin::Fresh { parent: 0 }, Origin::Fresh { parent: 0 }]
        );
    }

    #[test]
    fn clone_keeps_original_and_appends_copy() {
        let mut pop = Population::from_primitives(vec![Primitive::new([0.2, 0.7], 0.01, 0.3)]);
        pop.primitives_mut()[0].age = 42;
        apply_clone(&mut pop, &[true], &cfg()).unwrap();
        assert_eq!(pop.len(), 2);
        let (a, b) = (pop.primitives()[0], pop.primitives()[1]);
        assert_eq!((a.position, a.scale, a.opacity), (b.position, b.scale, b.opacity));
        assert_eq!((a.age, b.age), (42, 0));
        assert_ne!(pop.ids()[0], pop.ids()[1]);
    }

    #[test]
    fn empty_masks_leave_population_alone() {
        let mut pop = spawn_initial::<f64>(5, Layout::Grid, 0, 0.05, 0.5).unwrap();
        let before = pop.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        apply_split(&mut pop, &[false; 5], &cfg(), &mut rng).unwrap();
        apply_clone(&mut pop, &[false; 5], &cfg()).unwrap();
        assert_eq!(pop, before);
    }

    #[test]
    fn growth_cap_skips_by_id_order() {
        let mut pop = spawn_initial::<f64>(4, Layout::Grid, 0, 0.01, 0.5).unwrap();
        let c = ControllerConfig {
            max_primitives: 6,
            ..cfg()
        };
        let g = apply_clone(&mut pop, &[true; 4], &c).unwrap();
        assert_eq!(pop.len(), 6);
        assert_eq!(g.cloned, vec![0, 1]);
        assert_eq!(g.skipped, 2);
        assert!(g.cap_hit);
    }

    #[test]
    fn prune_by_opacity_and_scale() {
        let mut pop = Population::from_primitives(vec![
            Primitive::new([0.5, 0.5], 0.05, 0.001),
            Primitive::new([0.5, 0.5], 0.9, 0.5),
            Primitive::new([0.5, 0.5], 0.05, 0.5),
        ]);
        let (lineage, removed) = prune(&mut pop, &cfg());
        assert_eq!(removed, vec![0, 1]);
        assert_eq!(pop.ids(), &[2]);
        assert_eq!(lineage.origins, vec![Origin::Kept(2)]);
    }

    #[test]
    fn selective_reset_targets_low_snr_after_warmup() {
        let mc = MomentConfig::default();
        let mut pop = spawn_initial::<f64>(2, Layout::Grid, 0, 0.05, 0.7).unwrap();
        let coherent = state_with_constant([1.0, 0.0], 20);
        let mut noisy = MomentState::fresh();
        for t in 0..200 {
            let g = if t % 2 == 0 { [1.0, 0.0] } else { [-1.0, 0.0] };
            noisy = noisy.update(g, &mc).unwrap();
        }
        assert!(noisy.intrinsic_snr(&mc).unwrap() < 0.1);
        let states = vec![coherent, noisy];
        let c = cfg();

        let early = selective_opacity_reset(&mut pop, &states, &c, &mc, c.warmup_steps - 1).unwrap();
        assert!(early.is_empty());
        assert_eq!(pop.primitives()[1].opacity, 0.7);

        let reset = selective_opacity_reset(&mut pop, &states, &c, &mc, c.warmup_steps).unwrap();
        assert_eq!(reset, vec![1]);
        assert_eq!(pop.primitives()[0].opacity, 0.7);
        assert_eq!(pop.primitives()[1].opacity, 0.01);
    }

    #[test]
    fn global_reset_uses_min() {
        let mut pop = Population::from_primitives(vec![
            Primitive::new([0.5, 0.5], 0.05, 0.9),
            Primitive::new([0.5, 0.5], 0.05, 0.005),
        ]);
        let changed = global_opacity_reset(&mut pop, &cfg(), 10_000);
        assert_eq!(changed, vec![0]);
        assert_eq!(pop.primitives()[0].opacity, 0.01);
        assert_eq!(pop.primitives()[1].opacity, 0.005);
    }
}
