//! Run artifacts on disk.

use std::fs;
use std::path::{Path, PathBuf};

use super::run::{ControllerDecision, RunOutput};
use crate::error::{Error, Result};
use crate::io::{write_pgm, write_ply, write_snapshot};
use crate::scalar::Vec2;
use crate::toysplat::RenderGrid;

/// Binary mask of selected footprints: a pixel is white when it lies within
/// two scales of a selected center. The pixel containing each center is
/// always lit so sub-pixel primitives stay visible.
pub fn mask_image(footprints: &[(Vec2<f64>, f64)], width: usize, height: usize) -> RenderGrid<f64> {
    let mut img = RenderGrid::zeros(width, height);
    for &(pos, scale) in footprints {
        let r = 2.0 * scale;
        let col_range = |c: f64, n: usize| -> (usize, usize) {
            let lo = ((c - r) * n as f64 - 0.5).ceil().max(0.0);
            let hi = ((c + r) * n as f64 - 0.5).floor().min(n as f64 - 1.0);
            if hi < lo {
                (0, 0)
            } else {
                (lo as usize, hi as usize + 1)
            }
        };
        let (c0, c1) = col_range(pos[0], width);
        let (r0, r1) = col_range(pos[1], height);
        for row in r0..r1 {
            for col in c0..c1 {
                let dx = (col as f64 + 0.5) / width as f64 - pos[0];
                let dy = (row as f64 + 0.5) / height as f64 - pos[1];
                if dx * dx + dy * dy <= r * r {
                    img.pixels[row * width + col] = 1.0;
                }
            }
        }
        let col = (pos[0] * width as f64).floor();
        let row = (pos[1] * height as f64).floor();
        if (0.0..width as f64).contains(&col) && (0.0..height as f64).contains(&row) {
            img.pixels[row as usize * width + col as usize] = 1.0;
        }
    }
    img
}

pub fn mask_area_fraction(mask: &RenderGrid<f64>) -> f64 {
    let lit = mask.pixels.iter().filter(|&&v| v > 0.5).count();
    lit as f64 / mask.pixels.len().max(1) as f64
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::export(dir, e))
}

/// Writes `round_%04d.pgm` for every densification round into `dir`.
pub fn export_masks(
    decisions: &[ControllerDecision],
    width: usize,
    height: usize,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut paths = Vec::with_capacity(decisions.len());
    for (k, d) in decisions.iter().enumerate() {
        let path = dir.join(format!("round_{k:04}.pgm"));
        write_pgm(&path, &mask_image(&d.footprints, width, height))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Which artifacts [`write_artifacts`] produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Artifacts {
    pub logs: bool,
    pub masks: bool,
    pub ply: bool,
    pub render: bool,
    pub snapshot: bool,
}

impl Artifacts {
    pub const ALL: Artifacts = Artifacts {
        logs: true,
        masks: true,
        ply: true,
        render: true,
        snapshot: true,
    };
}

/// Writes the selected artifacts of a run into `dir`.
pub fn write_artifacts(out: &RunOutput, dir: &Path, what: Artifacts) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::export(&path, e))?;
        written.push(path);
        Ok(())
    };
    if what.logs {
        put("metrics.csv", out.metrics_csv())?;
        put("events.jsonl", out.events_jsonl())?;
        put("report.txt", run_report(out))?;
    }
    if what.masks {
        let (w, h) = (out.scenario.grid_width, out.scenario.grid_height);
        written.extend(export_masks(&out.decisions, w, h, &dir.join("masks"))?);
    }
    if what.render {
        let path = dir.join("render_final.pgm");
        write_pgm(&path, &out.final_render)?;
        written.push(path);
    }
    if what.ply {
        let path = dir.join("final.ply");
        write_ply(&path, &out.population)?;
        written.push(path);
    }
    if what.snapshot {
        let path = dir.join("final.snapshot");
        write_snapshot(&path, &out.population, Some(&out.moments))?;
        written.push(path);
    }
    Ok(written)
}

/// Plain-text summary of one run.
pub fn run_report(out: &RunOutput) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let sc = &out.scenario;
    let _ = writeln!(s, "scenario\t{}", sc.name);
    let _ = writeln!(s, "controller\t{}", super::experiments::label_of(sc));
    let _ = writeln!(s, "seed\t{}", sc.seed);
    let _ = writeln!(s, "steps\t{}", sc.total_steps);
    let _ = writeln!(s, "grid\t{}x{}", sc.grid_width, sc.grid_height);
    if let Some(f) = out.noise_floor {
        let _ = writeln!(s, "noise_floor_measured\t{:.6e}", f.measured);
        let _ = writeln!(s, "noise_floor_predicted\t{:.6e}", f.predicted);
    }
    let _ = writeln!(s, "tau_pos\t{:.6e}", out.controller.tau_pos);
    let _ = writeln!(s, "final_count\t{}", out.final_count());
    let _ = writeln!(s, "final_loss_vs_reference\t{:.6e}", out.final_loss());
    let _ = writeln!(
        s,
        "storage_bytes\t{}",
        out.metrics.last().map_or(0, |m| m.storage_bytes)
    );
    let _ = writeln!(s, "densifications\t{}", out.total_densifications());
    let _ = writeln!(
        s,
        "cap_hit_step\t{}",
        out.cap_hit_step.map_or("-".into(), |v| v.to_string())
    );
    s
}
