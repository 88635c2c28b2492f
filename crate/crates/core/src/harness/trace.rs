//! Replaying recorded gradient streams through a controller.
//!
//! A trace is JSON lines. An optional first line declares the primitive ids,
//! `{"ids": [3, 7, 9]}`; without it ids are `0..n` where `n` is the length of
//! the first record. Every other line is one step:
//!
//! ```text
//! {"step": 1, "grads": [[0.1, -0.2], [0.0, 0.3], [1.5, 0.0]]}
//! ```
//!
//! Steps must increase strictly and every record must have one `[gx, gy]`
//! pair per declared id. Geometry is never touched, so the split/clone
//! decision is not made; only statistics and selection are replayed.

use serde::{Deserialize, Serialize};

use super::scenario::Policy;
use crate::controller::{cadam_select, BaselineState, ControllerConfig};
use crate::error::{Error, Result};
use crate::moments::{batch_update, MomentConfig, MomentState};
use crate::primitives::PrimitiveId;
use crate::scalar::Vec2;
use crate::stats::{summarize, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub ids: Vec<PrimitiveId>,
    pub records: Vec<(u64, Vec<Vec2<f64>>)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    ids: Vec<PrimitiveId>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    step: u64,
    grads: Vec<Vec<f64>>,
}

pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut ids: Option<Vec<PrimitiveId>> = None;
    let mut records = Vec::new();
    let mut last_step: Option<u64> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let err = |message: String| Error::Trace { line, message };
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if ids.is_none() && records.is_empty() {
            if let Ok(h) = serde_json::from_str::<Header>(raw) {
                let mut sorted = h.ids.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != h.ids.len() {
                    return Err(err("duplicate id in header".into()));
                }
                ids = Some(h.ids);
                continue;
            }
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        if let Some(prev) = last_step {
            if rec.step <= prev {
                return Err(err(format!("step {} does not follow step {prev}", rec.step)));
            }
        }
        last_step = Some(rec.step);
        let expected = ids.get_or_insert_with(|| (0..rec.grads.len() as u64).collect()).len();
        if rec.grads.len() != expected {
            return Err(err(format!(
                "{} gradients for {expected} declared ids",
                rec.grads.len()
            )));
        }
        let mut grads = Vec::with_capacity(expected);
        for (i, g) in rec.grads.iter().enumerate() {
            match g.as_slice() {
                [x, y] => grads.push([*x, *y]),
                _ => {
                    return Err(err(format!(
                        "gradient {i} has {} components, expected 2",
                        g.len()
                    )))
                }
            }
        }
        records.push((rec.step, grads));
    }
    Ok(Trace {
        ids: ids.unwrap_or_default(),
        records,
    })
}

/// Selection outcome at one scheduled call during replay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayRecord {
    pub step: u64,
    pub n_primitives: usize,
    pub n_selected: usize,
    pub selected: Vec<PrimitiveId>,
    pub quantile_value: Option<f64>,
    pub mhat: Summary<f64>,
    pub snr: Summary<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub records: Vec<ReplayRecord>,
    pub final_moments: Vec<MomentState<f64>>,
}

impl Replay {
    pub fn final_snr(&self, cfg: &MomentConfig<f64>) -> Vec<Option<f64>> {
        self.final_moments
            .iter()
            .map(|s| s.intrinsic_snr(cfg).ok())
            .collect()
    }
}

/// Feeds a trace through a controller's statistics, selecting at every step
/// that is a multiple of `cc.densify_interval`. All primitives are treated
/// as eligible.
pub fn replay_trace(
    trace: &Trace,
    policy: Policy,
    cc: &ControllerConfig<f64>,
    mc: &MomentConfig<f64>,
) -> Result<Replay> {
    cc.validate()?;
    mc.validate()?;
    let n = trace.ids.len();
    let mut moments = vec![MomentState::fresh(); n];
    let mut baseline = BaselineState::new(n);
    let mut records = Vec::new();
    let eligible = vec![true; n];
    for (step, grads) in &trace.records {
        batch_update(&mut moments, grads, mc)?;
        baseline.accumulate(grads)?;
        if step % cc.densify_interval != 0 {
            continue;
        }
        let (mask, q) = match policy {
            Policy::Cadam => {
                let gate = cadam_select(&moments, &eligible, cc, mc)?;
                (gate.densify_mask, gate.quantile_value)
            }
            Policy::Baseline => (baseline.select(cc.tau_pos, &eligible), None),
            Policy::None => (vec![false; n], None),
        };
        baseline.reset();
        let selected: Vec<PrimitiveId> = mask
            .iter()
            .zip(&trace.ids)
            .filter_map(|(&m, &id)| m.then_some(id))
            .collect();
        let norms: Vec<f64> = moments
            .iter()
            .filter_map(|s| s.momentum_norm(mc).ok())
            .collect();
        let snrs: Vec<f64> = moments
            .iter()
            .filter_map(|s| s.intrinsic_snr(mc).ok())
            .collect();
        records.push(ReplayRecord {
            step: *step,
            n_primitives: n,
            n_selected: selected.len(),
            selected,
            quantile_value: q,
            mhat: summarize(&norms),
            snr: summarize(&snrs),
        });
    }
    Ok(Replay {
        records,
        final_moments: moments,
    })
}

/// Serializes gradients in the trace format, with an id header.
pub fn write_trace(ids: &[PrimitiveId], records: &[(u64, Vec<Vec2<f64>>)]) -> String {
    let mut s = serde_json::to_string(&serde_json::json!({ "ids": ids })).expect("json");
    s.push('\n');
    for (step, grads) in records {
        let v = serde_json::json!({ "step": step, "grads": grads });
        s.push_str(&serde_json::to_string(&v).expect("json"));
        s.push('\n');
    }
    s
}
