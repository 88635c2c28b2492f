//! The optimization and densification loop.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scenario::{Policy, Scenario, Variant};
use crate::controller::{
    apply_densify, cadam_select, decide_actions, eligibility, global_opacity_reset,
    momentum_only_select, prune, selective_opacity_reset, BaselineState, ControllerConfig,
};
use crate::error::{Error, Result};
use crate::io::storage_bytes;
use crate::moments::{par_batch_update, MomentConfig, MomentState};
use crate::primitives::{Lineage, Population, PrimitiveId};
use crate::scalar::{norm2, Vec2};
use crate::stats::{summarize, Summary};
use crate::toysplat::{
    loss_and_grads, render, sample_pseudo_target, AdamSlot, ParamOptimizer, RenderGrid,
    RenderSettings, TargetModel,
};

pub const METRICS_SCHEMA: &str = "densify-metrics/1";

/// Salt separating the split sampler from the target stream.
const SPLIT_STREAM_SALT: u64 = 0x5eed_5b11_u64;

/// One metrics row. Counts other than `n_primitives` cover the events since
/// the previous row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub n_primitives: usize,
    pub loss_vs_reference: f64,
    pub loss_vs_target: f64,
    pub grad_norm_mean: f64,
    pub mhat: Summary<f64>,
    pub snr: Summary<f64>,
    pub n_selected: usize,
    pub n_split: usize,
    pub n_cloned: usize,
    pub n_pruned: usize,
    pub n_reset: usize,
    pub storage_bytes: usize,
    pub opacity_mass: f64,
    pub cap_hit: bool,
}

impl MetricsRecord {
    pub const COLUMNS: [&'static str; 21] = [
        "step",
        "n_primitives",
        "loss_vs_reference",
        "loss_vs_target",
        "grad_norm_mean",
        "mhat_mean",
        "mhat_median",
        "mhat_q90",
        "snr_mean",
        "snr_median",
        "snr_q90",
        "n_selected",
        "n_split",
        "n_cloned",
        "n_pruned",
        "n_reset",
        "storage_bytes",
        "opacity_mass",
        "cap_hit",
        "densifications",
        "schema",
    ];

    pub fn densifications(&self) -> usize {
        self.n_split + self.n_cloned
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.n_primitives,
            self.loss_vs_reference,
            self.loss_vs_target,
            self.grad_norm_mean,
            self.mhat.mean,
            self.mhat.median,
            self.mhat.q90,
            self.snr.mean,
            self.snr.median,
            self.snr.q90,
            self.n_selected,
            self.n_split,
            self.n_cloned,
            self.n_pruned,
            self.n_reset,
            self.storage_bytes,
            self.opacity_mass,
            u8::from(self.cap_hit),
            self.densifications(),
            METRICS_SCHEMA,
        )
    }
}

/// CSV text for a metrics stream. The last column repeats the schema tag on
/// every row so rows stay self-describing after concatenation.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut s = MetricsRecord::COLUMNS.join(",");
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Per-round event line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundEvent {
    pub step: u64,
    pub policy: String,
    pub n_selected: usize,
    pub n_split: usize,
    pub n_clone: usize,
    pub n_pruned: usize,
    pub n_reset: usize,
    pub quantile_value: Option<f64>,
    pub cap_hit: bool,
}

impl RoundEvent {
    pub fn densifications(&self) -> usize {
        self.n_split + self.n_clone
    }
}

pub fn events_jsonl(events: &[RoundEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("event serializes"));
        s.push('\n');
    }
    s
}

/// One densification round. Masks are stored sparsely as id lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerDecision {
    pub step: u64,
    pub selected: Vec<PrimitiveId>,
    pub split: Vec<PrimitiveId>,
    pub cloned: Vec<PrimitiveId>,
    pub pruned: Vec<PrimitiveId>,
    pub reset: Vec<PrimitiveId>,
    pub quantile_value: Option<f64>,
    /// `(position, scale)` of every selected primitive at decision time.
    pub footprints: Vec<(Vec2<f64>, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseFloor {
    /// Monte Carlo mean of `|lambda * g_pos|` against a drift-free target.
    pub measured: f64,
    /// Same quantity from the per-primitive closed-form noise std.
    pub predicted: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub controller: ControllerConfig<f64>,
    pub noise_floor: Option<NoiseFloor>,
    pub population: Population<f64>,
    pub moments: Vec<MomentState<f64>>,
    pub metrics: Vec<MetricsRecord>,
    pub events: Vec<RoundEvent>,
    pub decisions: Vec<ControllerDecision>,
    pub cap_hit_step: Option<u64>,
    pub reference: RenderGrid<f64>,
    pub final_render: RenderGrid<f64>,
}

impl RunOutput {
    pub fn final_count(&self) -> usize {
        self.population.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.loss_vs_reference)
    }

    pub fn total_densifications(&self) -> usize {
        self.events.iter().map(RoundEvent::densifications).sum()
    }

    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.metrics)
    }

    pub fn events_jsonl(&self) -> String {
        events_jsonl(&self.events)
    }
}

/// Estimates the noise floor for the scenario's initial population: the
/// mean positional gradient norm when the clean part of the target is the
/// population's own render, so the drift is exactly zero.
pub fn measure_noise_floor(scenario: &Scenario) -> Result<NoiseFloor> {
    let pop = scenario.initial_population()?;
    let settings = scenario.render_settings();
    let (w, h) = (scenario.grid_width, scenario.grid_height);
    let model = TargetModel {
        reference: render(&pop, w, h, &settings),
        noise_sigma: scenario.noise_sigma,
        magnitude_jitter_sigma: scenario.magnitude_jitter_sigma,
        view_jitter: 0.0,
        mode: scenario.mode,
    };
    let samples = scenario.noise_floor_samples.max(1);
    let mut total = 0.0;
    for k in 0..samples {
        // Streams beyond any training step keep this independent of the run.
        let (target, lambda) = sample_pseudo_target(&model, u64::MAX - k, scenario.seed);
        let ev = loss_and_grads(&pop, &target, &settings)
            .ok_or_else(|| Error::Scenario("empty grid".into()))?;
        let sum: f64 = ev.grads.iter().map(|g| norm2(g.position) * lambda).sum();
        total += sum / pop.len() as f64;
    }
    let measured = total / samples as f64;

    // A 2D isotropic normal with per-component std s has E|x| = s sqrt(pi/2).
    let predicted = pop
        .primitives()
        .iter()
        .map(|p| {
            let sd = crate::toysplat::positional_noise_std(p, w, h, scenario.noise_sigma, &settings);
            ((sd[0] * sd[0] + sd[1] * sd[1]) / 2.0).sqrt() * (std::f64::consts::PI / 2.0).sqrt()
        })
        .sum::<f64>()
        / pop.len() as f64
        * model.mean_multiplier();
    Ok(NoiseFloor {
        measured,
        predicted,
    })
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let noise_floor = if scenario.needs_noise_floor() {
        Some(measure_noise_floor(scenario)?)
    } else {
        None
    };
    let cc = scenario.controller_config(noise_floor.map_or(0.0, |f| f.measured));
    cc.validate()?;
    let mc = scenario.moment_config();
    let model = scenario.target_model()?;
    let mut sim = Simulation::new(scenario, cc, mc, model)?;
    for step in 1..=scenario.total_steps {
        sim.step(step)?;
        if scenario.halt_on_cap && sim.cap_hit_step.is_some() {
            break;
        }
    }
    let final_render = render(
        &sim.pop,
        scenario.grid_width,
        scenario.grid_height,
        &sim.settings,
    );
    let reference = sim.model.reference.clone();
    Ok(RunOutput {
        scenario: scenario.clone(),
        controller: cc,
        noise_floor,
        population: sim.pop,
        moments: sim.moments,
        metrics: sim.metrics,
        events: sim.events,
        decisions: sim.decisions,
        cap_hit_step: sim.cap_hit_step,
        reference,
        final_render,
    })
}

#[derive(Default)]
struct Pending {
    selected: usize,
    split: usize,
    cloned: usize,
    pruned: usize,
    reset: usize,
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    cc: ControllerConfig<f64>,
    mc: MomentConfig<f64>,
    model: TargetModel<f64>,
    settings: RenderSettings<f64>,
    optimizer: ParamOptimizer<f64>,
    pop: Population<f64>,
    moments: Vec<MomentState<f64>>,
    baseline: BaselineState<f64>,
    slots: Vec<AdamSlot<f64>>,
    poisoned: Vec<bool>,
    split_rng: ChaCha8Rng,
    pending: Pending,
    cap_hit_step: Option<u64>,
    metrics: Vec<MetricsRecord>,
    events: Vec<RoundEvent>,
    decisions: Vec<ControllerDecision>,
}

impl<'a> Simulation<'a> {
    fn new(
        scenario: &'a Scenario,
        cc: ControllerConfig<f64>,
        mc: MomentConfig<f64>,
        model: TargetModel<f64>,
    ) -> Result<Self> {
        let pop = scenario.initial_population()?;
        let n = pop.len();
        let split_rng = {
            use rand::SeedableRng;
            ChaCha8Rng::seed_from_u64(scenario.seed ^ SPLIT_STREAM_SALT)
        };
        Ok(Self {
            scenario,
            cc,
            mc,
            model,
            settings: scenario.render_settings(),
            optimizer: scenario.optimizer(),
            pop,
            moments: vec![MomentState::fresh(); n],
            baseline: BaselineState::new(n),
            slots: vec![AdamSlot::default(); n],
            poisoned: vec![false; n],
            split_rng,
            pending: Pending::default(),
            cap_hit_step: None,
            metrics: Vec::new(),
            events: Vec::new(),
            decisions: Vec::new(),
        })
    }

    fn reindex(&mut self, lineage: &Lineage) {
        self.moments = lineage.remap(&self.moments, MomentState::fresh);
        self.baseline.reindex(lineage);
        self.slots = ParamOptimizer::reindex(&self.slots, lineage);
        self.poisoned = lineage.remap(&self.poisoned, || false);
    }

    fn step(&mut self, step: u64) -> Result<()> {
        let sc = self.scenario;
        let (target, lambda) = sample_pseudo_target(&self.model, step, sc.seed);
        let ev = loss_and_grads(&self.pop, &target, &self.settings)
            .ok_or_else(|| Error::Scenario("empty grid".into()))?;
        if !ev.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                dump: self.dump(lambda),
            });
        }
        let grads: Vec<_> = ev.grads.iter().map(|g| g.scaled(lambda)).collect();
        let positional: Vec<Vec2<f64>> = grads.iter().map(|g| g.position).collect();

        let report = par_batch_update(&mut self.moments, &positional, &self.mc)?;
        for i in report.poisoned {
            self.poisoned[i] = true;
        }
        self.baseline.accumulate(&positional)?;
        self.optimizer
            .step(&mut self.pop, &grads, &mut self.slots, step);
        self.pop.age_all();

        let k = self.cc.densify_interval;
        let mut touched = false;
        let mut round = RoundEvent {
            step,
            policy: self.policy_name(),
            n_selected: 0,
            n_split: 0,
            n_clone: 0,
            n_pruned: 0,
            n_reset: 0,
            quantile_value: None,
            cap_hit: false,
        };
        if step % k == 0 {
            let in_window = step >= sc.densify_start() && step <= sc.densify_end();
            if in_window && sc.controller != Policy::None {
                self.densify_round(step, &mut round)?;
                touched = true;
            }
            self.baseline.reset();
            self.poisoned.iter_mut().for_each(|p| *p = false);
        }
        if self.is_reset_step(step) {
            let reset = self.opacity_reset(step)?;
            round.n_reset = reset.len();
            self.pending.reset += reset.len();
            if let Some(d) = self.decisions.last_mut().filter(|d| d.step == step) {
                d.reset = reset;
            }
            touched = true;
        }
        if touched {
            round.cap_hit = self.cap_hit_step.is_some();
            self.events.push(round);
        }

        if step % sc.log_interval == 0 || step == sc.total_steps || touched {
            let loss_ref = ev.render.mse(&self.model.reference).unwrap_or(f64::NAN);
            let mean_norm = if positional.is_empty() {
                0.0
            } else {
                positional.iter().map(|g| norm2(*g)).sum::<f64>() / positional.len() as f64
            };
            self.record(step, loss_ref, ev.loss, mean_norm);
        }
        Ok(())
    }

    fn policy_name(&self) -> String {
        match (self.scenario.controller, self.scenario.variant) {
            (Policy::Cadam, Variant::Full) => "cadam".into(),
            (Policy::Cadam, v) => format!("cadam/{}", v.name()),
            (p, _) => p.name().into(),
        }
    }

    fn is_reset_step(&self, step: u64) -> bool {
        let sc = self.scenario;
        let enabled = match (sc.controller, sc.variant) {
            (Policy::None, _) => false,
            (Policy::Baseline, _) => true,
            (Policy::Cadam, Variant::Full) => true,
            (Policy::Cadam, _) => false,
        };
        enabled
            && sc.reset_interval > 0
            && step % sc.reset_interval == 0
            && step >= sc.warmup_steps
            && step <= sc.densify_end()
    }

    fn opacity_reset(&mut self, step: u64) -> Result<Vec<PrimitiveId>> {
        match self.scenario.controller {
            Policy::Baseline => Ok(global_opacity_reset(&mut self.pop, &self.cc, step)),
            Policy::Cadam => {
                selective_opacity_reset(&mut self.pop, &self.moments, &self.cc, &self.mc, step)
            }
            Policy::None => Ok(Vec::new()),
        }
    }

    fn densify_round(&mut self, step: u64, round: &mut RoundEvent) -> Result<()> {
        let mut decision = ControllerDecision {
            step,
            ..Default::default()
        };
        if self.cap_hit_step.is_none() {
            let eligible = eligibility(&self.pop, self.cc.densify_interval, &self.poisoned);
            let mask = match (self.scenario.controller, self.scenario.variant) {
                (Policy::Baseline, _) => self.baseline.select(self.cc.tau_pos, &eligible),
                (Policy::Cadam, Variant::MomentumOnly) => momentum_only_select(
                    &self.moments,
                    &eligible,
                    self.cc.momentum_threshold,
                    &self.mc,
                ),
                (Policy::Cadam, _) => {
                    let gate = cadam_select(&self.moments, &eligible, &self.cc, &self.mc)?;
                    decision.quantile_value = gate.quantile_value;
                    gate.densify_mask
                }
                (Policy::None, _) => vec![false; self.pop.len()],
            };
            for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                let p = self.pop.primitives()[i];
                decision.selected.push(self.pop.ids()[i]);
                decision.footprints.push((p.position, p.scale));
            }
            let (split_mask, clone_mask) = decide_actions(&mask, &self.pop, &self.cc);
            let growth = apply_densify(
                &mut self.pop,
                &split_mask,
                &clone_mask,
                &self.cc,
                &mut self.split_rng,
            )?;
            self.reindex(&growth.lineage);
            if growth.cap_hit {
                self.cap_hit_step = Some(step);
            }
            decision.split = growth.split;
            decision.cloned = growth.cloned;
        }
        let (lineage, removed) = prune(&mut self.pop, &self.cc);
        self.reindex(&lineage);
        decision.pruned = removed;

        round.n_selected = decision.selected.len();
        round.n_split = decision.split.len();
        round.n_clone = decision.cloned.len();
        round.n_pruned = decision.pruned.len();
        round.quantile_value = decision.quantile_value;
        self.pending.selected += round.n_selected;
        self.pending.split += round.n_split;
        self.pending.cloned += round.n_clone;
        self.pending.pruned += round.n_pruned;
        self.decisions.push(decision);
        Ok(())
    }

    fn record(&mut self, step: u64, loss_ref: f64, loss_target: f64, grad_norm_mean: f64) {
        let mut norms = Vec::with_capacity(self.moments.len());
        let mut snrs = Vec::with_capacity(self.moments.len());
        for s in &self.moments {
            if let (Ok(n), Ok(r)) = (s.momentum_norm(&self.mc), s.intrinsic_snr(&self.mc)) {
                norms.push(n);
                snrs.push(r);
            }
        }
        let p = std::mem::take(&mut self.pending);
        self.metrics.push(MetricsRecord {
            step,
            n_primitives: self.pop.len(),
            loss_vs_reference: loss_ref,
            loss_vs_target: loss_target,
            grad_norm_mean,
            mhat: summarize(&norms),
            snr: summarize(&snrs),
            n_selected: p.selected,
            n_split: p.split,
            n_cloned: p.cloned,
            n_pruned: p.pruned,
            n_reset: p.reset,
            storage_bytes: storage_bytes(&self.pop),
            opacity_mass: self.pop.opacity_mass(),
            cap_hit: self.cap_hit_step.is_some(),
        });
    }

    fn dump(&self, lambda: f64) -> String {
        let mut s = format!("lambda={lambda} n={}", self.pop.len());
        let bad: Vec<_> = self
            .pop
            .iter()
            .filter(|(_, p)| !p.is_valid())
            .take(8)
            .collect();
        for (id, p) in bad {
            let _ = write!(
                s,
                "; id {id}: pos=({}, {}) scale={} opacity={}",
                p.position[0], p.position[1], p.scale, p.opacity
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toysplat::SupervisionMode;

    fn small(controller: Policy) -> Scenario {
        Scenario {
            grid_width: 24,
            grid_height: 24,
            total_steps: 400,
            controller,
            ..Scenario::default()
        }
    }

    #[test]
    fn fixed_point_stays_put() {
        let s = Scenario {
            target: "init-render".into(),
            mode: SupervisionMode::Reconstruction,
            ..small(Policy::None)
        };
        let out = run(&s).unwrap();
        assert!(out.metrics.iter().all(|m| m.loss_vs_reference == 0.0));
        assert!(out.metrics.iter().all(|m| m.n_primitives == s.init_count));
        assert!(out.events.is_empty());
    }

    #[test]
    fn count_accounting_holds() {
        let s = Scenario {
            tau_q: 0.5,
            ..small(Policy::Cadam)
        };
        let out = run(&s).unwrap();
        let mut n = s.init_count as i64;
        for m in &out.metrics {
            n += (m.n_split + m.n_cloned) as i64 - m.n_pruned as i64;
            assert_eq!(n, m.n_primitives as i64, "step {}", m.step);
        }
    }

    #[test]
    fn events_stay_on_schedule() {
        let s = Scenario {
            densify_start: Some(200),
            densify_end: Some(300),
            reset_interval: 100,
            warmup_steps: 250,
            ..small(Policy::Baseline)
        };
        let out = run(&s).unwrap();
        let steps: Vec<u64> = out.events.iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![200, 300]);
        assert_eq!(out.events[0].n_reset, 0);
    }

    #[test]
    fn halting_at_the_cap_ends_the_log() {
        let s = Scenario {
            tau_pos: 0.0,
            max_primitives: 40,
            halt_on_cap: true,
            ..small(Policy::Baseline)
        };
        let out = run(&s).unwrap();
        let cap = out.cap_hit_step.expect("cap reached");
        assert_eq!(out.metrics.last().unwrap().step, cap);
        assert!(out.final_count() <= 40);
    }

    #[test]
    fn same_seed_same_logs() {
        let s = small(Policy::Cadam);
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a.metrics_csv(), b.metrics_csv());
        assert_eq!(a.events_jsonl(), b.events_jsonl());
    }

    #[test]
    fn csv_header_carries_schema() {
        let csv = metrics_csv(&[]);
        assert!(csv.starts_with("step,n_primitives,"));
        assert!(csv.trim_end().ends_with(",schema"));
    }

    #[test]
    fn noise_floor_matches_prediction() {
        let s = Scenario {
            noise_floor_samples: 400,
            ..small(Policy::Baseline)
        };
        let f = measure_noise_floor(&s).unwrap();
        let ratio = f.measured / f.predicted;
        assert!((0.85..1.15).contains(&ratio), "{f:?}");
    }
}
