//! Experiment configuration.
//!
//! Scenario files are flat TOML: one `key = value` per line, every key
//! optional. A minimal file names only the target and controller:
//!
//! ```toml
//! target = "ring"
//! controller = "cadam"
//! ```
//!
//! `target` is either a built-in shape (`disk`, `ring`, `two-bar`,
//! `checker-corner`), the keyword `init-render` (the render of the initial
//! population, useful as a fixed point), or a path to an 8-bit P5 PGM file
//! resolved relative to the scenario file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::io::read_pgm;
use crate::moments::MomentConfig;
use crate::primitives::{spawn_initial, Layout, Population};
use crate::toysplat::{
    render, LrSchedule, ParamOptimizer, ReferenceShape, RenderGrid, RenderSettings,
    SupervisionMode, TargetModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Fixed topology: no densification, pruning or resets.
    None,
    Baseline,
    #[default]
    Cadam,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::None => "none",
            Policy::Baseline => "baseline",
            Policy::Cadam => "cadam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Policy::None),
            "baseline" => Some(Policy::Baseline),
            "cadam" => Some(Policy::Cadam),
            _ => None,
        }
    }
}

/// Component ablations of the gated policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    /// Fixed threshold on the momentum norm; no quantile, SNR gate or reset.
    MomentumOnly,
    /// Quantile and SNR gate without the selective opacity reset.
    NoReset,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::MomentumOnly => "momentum_only",
            Variant::NoReset => "no_reset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "full" => Some(Variant::Full),
            "momentum_only" => Some(Variant::MomentumOnly),
            "no_reset" => Some(Variant::NoReset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,

    // supervision
    pub target: String,
    pub mode: SupervisionMode,
    pub noise_sigma: f64,
    pub magnitude_jitter_sigma: f64,
    pub view_jitter: f64,
    pub grid_width: usize,
    pub grid_height: usize,

    // initial population
    pub init_count: usize,
    pub init_layout: Layout,
    pub init_scale: f64,
    pub init_opacity: f64,

    // density control
    pub controller: Policy,
    pub variant: Variant,
    pub tau_q: f64,
    pub tau_snr: f64,
    pub tau_pos: f64,
    /// When set, `tau_pos` is this multiple of the measured noise floor.
    pub tau_pos_floor_factor: Option<f64>,
    pub tau_scale: f64,
    pub momentum_threshold: f64,
    /// When set, `momentum_threshold` is this multiple of the noise floor.
    pub momentum_threshold_floor_factor: Option<f64>,
    pub prune_opacity: f64,
    pub prune_scale_max: f64,
    pub max_primitives: usize,
    pub split_factor: f64,

    // moments
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,

    // schedule
    pub total_steps: u64,
    pub densify_interval: u64,
    /// Defaults to one densification interval.
    pub densify_start: Option<u64>,
    /// Defaults to 80% of `total_steps`.
    pub densify_end: Option<u64>,
    pub reset_interval: u64,
    pub warmup_steps: u64,

    // parameter optimizer
    pub lr_position: f64,
    pub lr_position_final: f64,
    pub lr_scale: f64,
    pub lr_opacity: f64,

    // numerics and logging
    /// Footprint radius in scales; 0 evaluates every pixel.
    pub cutoff_sigmas: f64,
    pub log_interval: u64,
    /// Monte Carlo samples used to measure the noise floor.
    pub noise_floor_samples: u64,
    /// End the run at the round that reaches `max_primitives`, the way an
    /// out-of-memory failure would.
    pub halt_on_cap: bool,
    pub seed: u64,

    /// Directory used to resolve a relative PGM `target`.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        let cc = ControllerConfig::<f64>::default();
        Self {
            name: "default".into(),
            target: "ring".into(),
            mode: SupervisionMode::Generative,
            noise_sigma: 0.2,
            magnitude_jitter_sigma: 1.5,
            view_jitter: 0.0,
            grid_width: 64,
            grid_height: 64,
            init_count: 16,
            init_layout: Layout::Grid,
            init_scale: 0.08,
            init_opacity: 0.05,
            controller: Policy::Cadam,
            variant: Variant::Full,
            tau_q: cc.tau_q,
            tau_snr: cc.tau_snr,
            tau_pos: cc.tau_pos,
            tau_pos_floor_factor: None,
            tau_scale: cc.tau_scale,
            momentum_threshold: cc.momentum_threshold,
            momentum_threshold_floor_factor: None,
            prune_opacity: cc.prune_opacity,
            prune_scale_max: cc.prune_scale_max,
            max_primitives: cc.max_primitives,
            split_factor: cc.split_factor,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            total_steps: 6000,
            densify_interval: cc.densify_interval,
            densify_start: None,
            densify_end: None,
            reset_interval: cc.reset_interval,
            warmup_steps: cc.warmup_steps,
            lr_position: 1.6e-3,
            lr_position_final: 1.6e-5,
            lr_scale: 5e-3,
            lr_opacity: 2.5e-2,
            cutoff_sigmas: 5.0,
            log_interval: 10,
            noise_floor_samples: 64,
            halt_on_cap: false,
            seed: 0,
            base_dir: None,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::export(path, e))?;
        let mut s = Self::from_toml(&text)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn densify_start(&self) -> u64 {
        self.densify_start.unwrap_or(self.densify_interval)
    }

    pub fn densify_end(&self) -> u64 {
        self.densify_end
            .unwrap_or((self.total_steps as f64 * 0.8).round() as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.grid_width == 0 || self.grid_height == 0 {
            return bad("grid dimensions must be positive".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive".into());
        }
        let (start, end) = (self.densify_start(), self.densify_end());
        if !(start <= end && end <= self.total_steps) {
            return bad(format!(
                "need densify_start ({start}) <= densify_end ({end}) <= total_steps ({})",
                self.total_steps
            ));
        }
        if self.log_interval == 0 {
            return bad("log_interval must be positive".into());
        }
        if !(self.cutoff_sigmas >= 0.0) {
            return bad("cutoff_sigmas must be non-negative".into());
        }
        for (k, v) in [
            ("lr_position", self.lr_position),
            ("lr_position_final", self.lr_position_final),
            ("lr_scale", self.lr_scale),
            ("lr_opacity", self.lr_opacity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{k} must be a non-negative number"));
            }
        }
        self.controller_config(0.0).validate()?;
        self.moment_config().validate()?;
        Ok(())
    }

    /// Controller configuration, resolving floor-relative thresholds against
    /// `noise_floor`.
    pub fn controller_config(&self, noise_floor: f64) -> ControllerConfig<f64> {
        ControllerConfig {
            tau_q: self.tau_q,
            tau_snr: self.tau_snr,
            tau_pos: self
                .tau_pos_floor_factor
                .map_or(self.tau_pos, |f| f * noise_floor),
            tau_scale: self.tau_scale,
            densify_interval: self.densify_interval,
            prune_opacity: self.prune_opacity,
            prune_scale_max: self.prune_scale_max,
            reset_interval: self.reset_interval,
            warmup_steps: self.warmup_steps,
            max_primitives: self.max_primitives,
            split_factor: self.split_factor,
            momentum_threshold: self
                .momentum_threshold_floor_factor
                .map_or(self.momentum_threshold, |f| f * noise_floor),
        }
    }

    pub fn needs_noise_floor(&self) -> bool {
        self.tau_pos_floor_factor.is_some() || self.momentum_threshold_floor_factor.is_some()
    }

    pub fn moment_config(&self) -> MomentConfig<f64> {
        MomentConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn optimizer(&self) -> ParamOptimizer<f64> {
        ParamOptimizer {
            position_lr: LrSchedule {
                initial: self.lr_position,
                last: self.lr_position_final,
                steps: self.total_steps,
            },
            scale_lr: self.lr_scale,
            opacity_lr: self.lr_opacity,
            ..ParamOptimizer::default()
        }
    }

    pub fn render_settings(&self) -> RenderSettings<f64> {
        RenderSettings {
            cutoff_sigmas: (self.cutoff_sigmas > 0.0).then_some(self.cutoff_sigmas),
        }
    }

    pub fn initial_population(&self) -> Result<Population<f64>> {
        spawn_initial(
            self.init_count,
            self.init_layout,
            self.seed,
            self.init_scale,
            self.init_opacity,
        )
    }

    pub fn reference(&self) -> Result<RenderGrid<f64>> {
        let (w, h) = (self.grid_width, self.grid_height);
        if let Some(shape) = ReferenceShape::parse(&self.target) {
            return Ok(shape.render(w, h));
        }
        if self.target == "init-render" {
            let pop = self.initial_population()?;
            return Ok(render(&pop, w, h, &self.render_settings()));
        }
        let mut path = PathBuf::from(&self.target);
        if path.is_relative() {
            if let Some(base) = &self.base_dir {
                path = base.join(path);
            }
        }
        let img = read_pgm(&path)?;
        if img.width != w || img.height != h {
            return Err(Error::Scenario(format!(
                "reference {} is {}x{}, scenario grid is {w}x{h}",
                path.display(),
                img.width,
                img.height
            )));
        }
        Ok(img)
    }

    pub fn target_model(&self) -> Result<TargetModel<f64>> {
        let model = TargetModel {
            reference: self.reference()?,
            noise_sigma: self.noise_sigma,
            magnitude_jitter_sigma: self.magnitude_jitter_sigma,
            view_jitter: self.view_jitter,
            mode: self.mode,
        };
        model.validate().map_err(Error::Scenario)?;
        Ok(model)
    }

    /// Fields that must agree for two scenarios to be compared, i.e.
    /// everything except the controller choice, its variant and thresholds.
    pub fn comparable_with(&self, other: &Scenario) -> std::result::Result<(), String> {
        let strip = |s: &Scenario| Scenario {
            name: String::new(),
            controller: Policy::None,
            variant: Variant::Full,
            tau_q: 0.0,
            tau_snr: 0.0,
            tau_pos: 0.0,
            tau_pos_floor_factor: None,
            momentum_threshold: 0.0,
            momentum_threshold_floor_factor: None,
            ..s.clone()
        };
        let (a, b) = (strip(self), strip(other));
        if a == b {
            return Ok(());
        }
        let (ta, tb) = (a.to_toml(), b.to_toml());
        let diff: Vec<String> = ta
            .lines()
            .zip(tb.lines())
            .filter(|(x, y)| x != y)
            .map(|(x, y)| format!("{x}  vs  {y}"))
            .collect();
        Err(diff.join("; "))
    }

    /// Applies a `key=value` override using the same syntax as the file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table: toml::Table = toml::from_str(&self.to_toml())
            .map_err(|e| Error::Scenario(e.to_string()))?;
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|t| t.get("v").cloned())
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        let base_dir = self.base_dir.clone();
        *self = toml::from_str(&toml::to_string(&table).expect("table serializes"))
            .map_err(|e| Error::Scenario(format!("{key}={value}: {e}")))?;
        self.base_dir = base_dir;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let s = Scenario::from_toml("target = \"disk\"\ncontroller = \"baseline\"\n").unwrap();
        assert_eq!(s.target, "disk");
        assert_eq!(s.controller, Policy::Baseline);
        assert_eq!(s.total_steps, 6000);
        assert_eq!(s.densify_start(), 100);
        assert_eq!(s.densify_end(), 4800);
        s.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Scenario::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario {
            tau_pos_floor_factor: Some(0.5),
            variant: Variant::NoReset,
            ..Scenario::default()
        };
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn schedule_must_be_ordered() {
        let s = Scenario {
            densify_start: Some(500),
            densify_end: Some(400),
            ..Scenario::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn overrides_parse_like_the_file() {
        let mut s = Scenario::default();
        s.set("tau_q", "0.5").unwrap();
        s.set("controller", "baseline").unwrap();
        s.set("densify_end", "1000").unwrap();
        assert_eq!(s.tau_q, 0.5);
        assert_eq!(s.controller, Policy::Baseline);
        assert_eq!(s.densify_end, Some(1000));
        assert!(s.set("nope", "1").is_err());
    }

    #[test]
    fn comparability_ignores_controller_fields() {
        let a = Scenario::default();
        let b = Scenario {
            controller: Policy::Baseline,
            tau_pos: 1.0,
            ..a.clone()
        };
        assert!(a.comparable_with(&b).is_ok());
        let c = Scenario {
            noise_sigma: 0.3,
            ..a.clone()
        };
        assert!(a.comparable_with(&c).unwrap_err().contains("noise_sigma"));
    }

    #[test]
    fn floor_relative_thresholds_resolve() {
        let s = Scenario {
            tau_pos_floor_factor: Some(2.0),
            ..Scenario::default()
        };
        assert_eq!(s.controller_config(0.25).tau_pos, 0.5);
        assert!(s.needs_noise_floor());
    }
}
