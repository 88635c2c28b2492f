//! Scenarios, the training loop, experiments and artifact export.

mod experiments;
mod export;
mod run;
mod scenario;
mod trace;

pub use experiments::{
    ablate, compare, comparison_of, growth_curves_csv, label_of, run_all, sweep, sweep_table,
    Comparison, RunSummary, SweepAxis, SweepPoint,
};
pub use export::{
    export_masks, mask_area_fraction, mask_image, run_report, write_artifacts, Artifacts,
};
pub use run::{
    events_jsonl, measure_noise_floor, metrics_csv, run, ControllerDecision, MetricsRecord,
    NoiseFloor, RoundEvent, RunOutput, METRICS_SCHEMA,
};
pub use scenario::{Policy, Scenario, Variant};
pub use trace::{parse_trace, replay_trace, write_trace, Replay, ReplayRecord, Trace};
