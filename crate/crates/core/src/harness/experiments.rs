//! Multi-run experiments: controller comparison, threshold sweeps, ablations.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::run::{run, RunOutput};
use super::scenario::{Policy, Scenario, Variant};
use crate::error::{Error, Result};

/// Final-state summary shared by all experiment reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub final_count: usize,
    pub final_loss: f64,
    pub storage_bytes: usize,
    pub densifications: usize,
    pub cap_hit_step: Option<u64>,
}

impl RunSummary {
    pub fn of(label: impl Into<String>, out: &RunOutput) -> Self {
        Self {
            label: label.into(),
            final_count: out.final_count(),
            final_loss: out.final_loss(),
            storage_bytes: out.metrics.last().map_or(0, |m| m.storage_bytes),
            densifications: out.total_densifications(),
            cap_hit_step: out.cap_hit_step,
        }
    }
}

/// Runs independent scenarios, in parallel when `parallel` is set. Results
/// come back in input order either way.
pub fn run_all(scenarios: &[Scenario], parallel: bool) -> Result<Vec<RunOutput>> {
    if parallel {
        scenarios.par_iter().map(run).collect()
    } else {
        scenarios.iter().map(run).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub first: RunSummary,
    pub second: RunSummary,
    /// second / first.
    pub count_ratio: f64,
    pub loss_ratio: f64,
    pub storage_ratio: f64,
    /// `step, first_n, second_n, first_loss, second_loss` joined on step.
    pub joined: Vec<(u64, usize, usize, f64, f64)>,
    pub verdict: String,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        b / a
    }
}

/// Compares two runs of scenarios that differ only in controller settings.
pub fn compare(first: &Scenario, second: &Scenario, parallel: bool) -> Result<Comparison> {
    first
        .comparable_with(second)
        .map_err(|d| Error::Scenario(format!("scenarios differ outside the controller: {d}")))?;
    let outs = run_all(&[first.clone(), second.clone()], parallel)?;
    Ok(comparison_of(
        (&label_of(first), &outs[0]),
        (&label_of(second), &outs[1]),
    ))
}

pub fn label_of(s: &Scenario) -> String {
    match (s.controller, s.variant) {
        (Policy::Cadam, Variant::Full) | (Policy::Baseline | Policy::None, _) => {
            s.controller.name().to_string()
        }
        (Policy::Cadam, v) => format!("cadam/{}", v.name()),
    }
}

pub fn comparison_of(first: (&str, &RunOutput), second: (&str, &RunOutput)) -> Comparison {
    let a = RunSummary::of(first.0, first.1);
    let b = RunSummary::of(second.0, second.1);
    let count_ratio = ratio(a.final_count as f64, b.final_count as f64);
    let loss_ratio = ratio(a.final_loss, b.final_loss);
    let storage_ratio = ratio(a.storage_bytes as f64, b.storage_bytes as f64);
    let joined = first
        .1
        .metrics
        .iter()
        .zip(&second.1.metrics)
        .filter(|(x, y)| x.step == y.step)
        .map(|(x, y)| {
            (
                x.step,
                x.n_primitives,
                y.n_primitives,
                x.loss_vs_reference,
                y.loss_vs_reference,
            )
        })
        .collect();
    let verdict = if count_ratio <= 1.0 && loss_ratio <= 1.0 {
        format!("{} is smaller and no worse than {}", b.label, a.label)
    } else if count_ratio <= 1.0 {
        format!(
            "{} uses {count_ratio:.3}x the primitives of {} at {loss_ratio:.3}x its loss",
            b.label, a.label
        )
    } else if loss_ratio <= 1.0 {
        format!(
            "{} fits better ({loss_ratio:.3}x loss) with {count_ratio:.3}x the primitives of {}",
            b.label, a.label
        )
    } else {
        format!("{} is larger and worse than {}", b.label, a.label)
    };
    Comparison {
        first: a,
        second: b,
        count_ratio,
        loss_ratio,
        storage_ratio,
        joined,
        verdict,
    }
}

impl Comparison {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "label\tfinal_count\tfinal_loss\tstorage_bytes\tdensifications\tcap_hit_step");
        for r in [&self.first, &self.second] {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.6e}\t{}\t{}\t{}",
                r.label,
                r.final_count,
                r.final_loss,
                r.storage_bytes,
                r.densifications,
                r.cap_hit_step.map_or("-".into(), |v| v.to_string())
            );
        }
        let _ = writeln!(s, "count_ratio\t{:.6}", self.count_ratio);
        let _ = writeln!(s, "loss_ratio\t{:.6}", self.loss_ratio);
        let _ = writeln!(s, "storage_ratio\t{:.6}", self.storage_ratio);
        let _ = writeln!(s, "verdict\t{}", self.verdict);
        s
    }

    pub fn joined_csv(&self) -> String {
        let mut s = format!(
            "step,{a}_n,{b}_n,{a}_loss,{b}_loss\n",
            a = self.first.label.replace('/', "_"),
            b = self.second.label.replace('/', "_")
        );
        for (step, na, nb, la, lb) in &self.joined {
            let _ = writeln!(s, "{step},{na},{nb},{la},{lb}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    TauQ,
    TauSnr,
    SigmaLn,
    TauPos,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "tau_q" => Some(Self::TauQ),
            "tau_snr" => Some(Self::TauSnr),
            "sigma_ln" | "magnitude_jitter_sigma" => Some(Self::SigmaLn),
            "tau_pos" => Some(Self::TauPos),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TauQ => "tau_q",
            Self::TauSnr => "tau_snr",
            Self::SigmaLn => "sigma_ln",
            Self::TauPos => "tau_pos",
        }
    }

    pub fn apply(self, s: &Scenario, value: f64) -> Scenario {
        let mut s = s.clone();
        match self {
            Self::TauQ => s.tau_q = value,
            Self::TauSnr => s.tau_snr = value,
            Self::SigmaLn => s.magnitude_jitter_sigma = value,
            Self::TauPos => {
                s.tau_pos = value;
                s.tau_pos_floor_factor = None;
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub summary: RunSummary,
    pub output: RunOutput,
}

/// One run per value with the scenario's seed.
pub fn sweep(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    parallel: bool,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Scenario("sweep needs at least one value".into()));
    }
    let scenarios: Vec<Scenario> = values.iter().map(|&v| axis.apply(base, v)).collect();
    let outs = run_all(&scenarios, parallel)?;
    Ok(values
        .iter()
        .zip(outs)
        .map(|(&value, output)| SweepPoint {
            value,
            summary: RunSummary::of(format!("{}={value}", axis.name()), &output),
            output,
        })
        .collect())
}

pub fn sweep_table(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut s = format!("{}\tfinal_count\tfinal_loss\tdensifications\tcap_hit_step\n", axis.name());
    for p in points {
        let _ = writeln!(
            s,
            "{}\t{}\t{:.6e}\t{}\t{}",
            p.value,
            p.summary.final_count,
            p.summary.final_loss,
            p.summary.densifications,
            p.summary.cap_hit_step.map_or("-".into(), |v| v.to_string())
        );
    }
    s
}

/// Runs each variant of a gated scenario.
pub fn ablate(
    base: &Scenario,
    variants: &[Variant],
    parallel: bool,
) -> Result<Vec<(Variant, RunOutput)>> {
    if base.controller != Policy::Cadam {
        return Err(Error::Scenario(format!(
            "ablation needs controller = cadam, got {}",
            base.controller.name()
        )));
    }
    let scenarios: Vec<Scenario> = variants
        .iter()
        .map(|&v| Scenario {
            variant: v,
            ..base.clone()
        })
        .collect();
    let outs = run_all(&scenarios, parallel)?;
    Ok(variants.iter().copied().zip(outs).collect())
}

/// Count per logged step, one column per variant.
pub fn growth_curves_csv(runs: &[(Variant, RunOutput)]) -> String {
    let mut s = String::from("step");
    for (v, _) in runs {
        let _ = write!(s, ",{}", v.name());
    }
    s.push('\n');
    let Some((_, first)) = runs.first() else {
        return s;
    };
    for (k, m) in first.metrics.iter().enumerate() {
        let _ = write!(s, "{}", m.step);
        for (_, out) in runs {
            match out.metrics.get(k).filter(|r| r.step == m.step) {
                Some(r) => {
                    let _ = write!(s, ",{}", r.n_primitives);
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Scenario {
        Scenario {
            grid_width: 16,
            grid_height: 16,
            total_steps: 200,
            ..Scenario::default()
        }
    }

    #[test]
    fn identical_fixed_runs_compare_at_unity() {
        let s = Scenario {
            controller: Policy::None,
            ..tiny()
        };
        let c = compare(&s, &s, false).unwrap();
        assert_eq!(c.count_ratio, 1.0);
        assert_eq!(c.loss_ratio, 1.0);
        assert_eq!(c.storage_ratio, 1.0);
        assert!(c.report().contains("verdict"));
    }

    #[test]
    fn mismatched_scenarios_are_rejected() {
        let a = tiny();
        let b = Scenario {
            seed: 9,
            ..tiny()
        };
        assert!(matches!(compare(&a, &b, false), Err(Error::Scenario(_))));
    }

    #[test]
    fn single_value_sweep_matches_run() {
        let s = tiny();
        let pts = sweep(&s, SweepAxis::TauQ, &[s.tau_q], false).unwrap();
        let direct = run(&s).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].output.metrics_csv(), direct.metrics_csv());
    }

    #[test]
    fn parallel_and_serial_agree() {
        let s = tiny();
        let a = sweep(&s, SweepAxis::TauSnr, &[0.0, 0.5], true).unwrap();
        let b = sweep(&s, SweepAxis::TauSnr, &[0.0, 0.5], false).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.output.events_jsonl(), y.output.events_jsonl());
        }
    }

    #[test]
    fn ablation_requires_gated_controller() {
        let s = Scenario {
            controller: Policy::Baseline,
            ..tiny()
        };
        assert!(ablate(&s, &[Variant::Full], false).is_err());
        let runs = ablate(&tiny(), &[Variant::Full, Variant::NoReset], false).unwrap();
        let csv = growth_curves_csv(&runs);
        assert!(csv.starts_with("step,full,no_reset\n"));
    }

    #[test]
    fn axes_parse() {
        assert_eq!(SweepAxis::parse("tau_Q"), Some(SweepAxis::TauQ));
        assert_eq!(SweepAxis::parse("tau-snr"), Some(SweepAxis::TauSnr));
        assert_eq!(SweepAxis::parse("sigma_ln"), Some(SweepAxis::SigmaLn));
        assert_eq!(SweepAxis::parse("nope"), None);
    }
}
