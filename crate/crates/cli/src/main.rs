use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use densify_core::controller::ControllerConfig;
use densify_core::harness::{
    ablate, compare, growth_curves_csv, label_of, parse_trace, replay_trace, run,
    sweep, sweep_table, write_artifacts, Artifacts, Policy, RunOutput, Scenario, SweepAxis,
    Variant,
};
use densify_core::moments::MomentConfig;

#[derive(Parser)]
#[command(name = "densify", version, about = "Density-control experiments on a toy splatting task")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides total_steps.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Overrides the grid, e.g. 64x64.
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Single-threaded execution; member runs of an experiment go one at a time.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Scenario override in file syntax, e.g. --set tau_q=0.5. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its logs and artifacts.
    Run { scenario: PathBuf },
    /// Run the same scenario under two controllers and compare them.
    Compare {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "baseline,cadam")]
        controllers: Vec<String>,
    },
    /// One run per threshold value.
    Sweep {
        scenario: PathBuf,
        /// tau_Q, tau_SNR, sigma_ln or tau_pos.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run component ablations of the gated controller.
    Ablate {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "momentum_only,no_reset,full")]
        variants: Vec<String>,
    },
    /// Replay a recorded gradient trace through a controller.
    Replay {
        trace: PathBuf,
        #[arg(long, default_value = "cadam")]
        controller: String,
        /// Selection interval in trace steps.
        #[arg(long, default_value_t = 100)]
        interval: u64,
        #[arg(long, default_value_t = 0.9)]
        tau_q: f64,
        #[arg(long, default_value_t = 0.1)]
        tau_snr: f64,
        #[arg(long, default_value_t = 2e-4)]
        tau_pos: f64,
    },
    /// Run a scenario and write only the requested artifacts.
    Export {
        scenario: PathBuf,
        #[arg(long)]
        masks: bool,
        #[arg(long)]
        ply: bool,
        #[arg(long)]
        render: bool,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w = w.parse().map_err(|e| format!("width: {e}"))?;
    let h = h.parse().map_err(|e| format!("height: {e}"))?;
    Ok((w, h))
}

fn load(path: &Path, common: &Common) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("override {kv:?} is not KEY=VALUE"))?;
        s.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(steps) = common.steps {
        s.total_steps = steps;
    }
    if let Some((w, h)) = common.grid {
        s.grid_width = w;
        s.grid_height = h;
    }
    s.validate()?;
    Ok(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn save_run(out: &RunOutput, dir: &Path, what: Artifacts) -> Result<()> {
    write_artifacts(out, dir, what)?;
    println!(
        "{}: {} primitives, loss {:.4e}, {} densifications -> {}",
        label_of(&out.scenario),
        out.final_count(),
        out.final_loss(),
        out.total_densifications(),
        dir.display()
    );
    Ok(())
}

fn with_controller(base: &Scenario, name: &str) -> Result<Scenario> {
    let (policy, variant) = match name.split_once('/') {
        Some((p, v)) => (p, Variant::parse(v)),
        None => (name, Some(Variant::Full)),
    };
    let controller = Policy::parse(policy).with_context(|| format!("unknown controller {name:?}"))?;
    let variant = variant.with_context(|| format!("unknown variant in {name:?}"))?;
    Ok(Scenario {
        controller,
        variant,
        ..base.clone()
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let common = &cli.common;
    if common.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let parallel = !common.deterministic;
    let out_dir = &common.out_dir;

    match &cli.command {
        Command::Run { scenario } => {
            let s = load(scenario, common)?;
            let out = run(&s)?;
            save_run(&out, out_dir, Artifacts::ALL)?;
        }
        Command::Compare {
            scenario,
            controllers,
        } => {
            let base = load(scenario, common)?;
            let [a, b] = controllers.as_slice() else {
                bail!("--controllers takes exactly two names, got {}", controllers.len());
            };
            let (sa, sb) = (with_controller(&base, a)?, with_controller(&base, b)?);
            let c = compare(&sa, &sb, parallel)?;
            write(&out_dir.join("report.txt"), &c.report())?;
            write(&out_dir.join("joined.csv"), &c.joined_csv())?;
            print!("{}", c.report());
        }
        Command::Sweep {
            scenario,
            axis,
            values,
        } => {
            let base = load(scenario, common)?;
            let axis = SweepAxis::parse(axis).with_context(|| format!("unknown axis {axis:?}"))?;
            let points = sweep(&base, axis, values, parallel)?;
            for p in &points {
                let dir = out_dir.join(format!("{}_{}", axis.name(), p.value));
                write_artifacts(&p.output, &dir, Artifacts {
                    masks: false,
                    ..Artifacts::ALL
                })?;
            }
            let table = sweep_table(axis, &points);
            write(&out_dir.join("report.txt"), &table)?;
            print!("{table}");
        }
        Command::Ablate { scenario, variants } => {
            let base = load(scenario, common)?;
            let variants = variants
                .iter()
                .map(|v| Variant::parse(v).with_context(|| format!("unknown variant {v:?}")))
                .collect::<Result<Vec<_>>>()?;
            let runs = ablate(&base, &variants, parallel)?;
            let mut report = String::new();
            for (v, out) in &runs {
                save_run(out, &out_dir.join(v.name()), Artifacts {
                    masks: false,
                    ..Artifacts::ALL
                })?;
                report.push_str(&format!(
                    "{}\t{}\t{:.6e}\t{}\n",
                    v.name(),
                    out.final_count(),
                    out.final_loss(),
                    out.cap_hit_step.map_or("-".into(), |s| s.to_string())
                ));
            }
            write(&out_dir.join("growth.csv"), &growth_curves_csv(&runs))?;
            write(&out_dir.join("report.txt"), &report)?;
        }
        Command::Replay {
            trace,
            controller,
            interval,
            tau_q,
            tau_snr,
            tau_pos,
        } => {
            let text = fs::read_to_string(trace)
                .with_context(|| format!("reading {}", trace.display()))?;
            let parsed = parse_trace(&text)?;
            let policy = Policy::parse(controller)
                .with_context(|| format!("unknown controller {controller:?}"))?;
            let cc = ControllerConfig {
                densify_interval: *interval,
                tau_q: *tau_q,
                tau_snr: *tau_snr,
                tau_pos: *tau_pos,
                ..ControllerConfig::default()
            };
            let replay = replay_trace(&parsed, policy, &cc, &MomentConfig::default())?;
            let mut lines = String::new();
            for r in &replay.records {
                lines.push_str(&serde_json::to_string(r)?);
                lines.push('\n');
            }
            write(&out_dir.join("replay.jsonl"), &lines)?;
            println!(
                "{} selection calls over {} primitives -> {}",
                replay.records.len(),
                parsed.ids.len(),
                out_dir.join("replay.jsonl").display()
            );
        }
        Command::Export {
            scenario,
            masks,
            ply,
            render,
        } => {
            if !(*masks || *ply || *render) {
                bail!("export needs at least one of --masks, --ply, --render");
            }
            let s = load(scenario, common)?;
            let out = run(&s)?;
            let written = write_artifacts(&out, out_dir, Artifacts {
                logs: false,
                masks: *masks,
                ply: *ply,
                render: *render,
                snapshot: false,
            })?;
            println!("wrote {} files under {}", written.len(), out_dir.display());
        }
    }
    Ok(())
}
