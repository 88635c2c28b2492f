//! Reference images and the stochastic pseudo-target generator.
//!
//! In generative mode every step draws a fresh target
//! `T_t = warp_t(reference) + noise_sigma * eta_t` with `eta_t` a white
//! standard-normal field (deliberately not clipped, so the noise stays
//! zero-mean), together with a scalar gradient multiplier
//! `lambda_t ~ LogNormal(0, magnitude_jitter_sigma^2)` that the caller applies
//! to every gradient of that step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::RenderGrid;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SupervisionMode {
    /// Fixed target equal to the reference; `lambda = 1`.
    Reconstruction,
    #[default]
    Generative,
}

/// Built-in reference shapes, rendered with 4x4 supersampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceShape {
    Disk,
    Ring,
    TwoBar,
    CheckerCorner,
}

impl ReferenceShape {
    pub const ALL: [ReferenceShape; 4] = [
        ReferenceShape::Disk,
        ReferenceShape::Ring,
        ReferenceShape::TwoBar,
        ReferenceShape::CheckerCorner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceShape::Disk => "disk",
            ReferenceShape::Ring => "ring",
            ReferenceShape::TwoBar => "two-bar",
            ReferenceShape::CheckerCorner => "checker-corner",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    fn inside(self, x: f64, y: f64) -> bool {
        let r = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
        match self {
            ReferenceShape::Disk => r <= 0.3,
            ReferenceShape::Ring => (0.22..=0.34).contains(&r),
            ReferenceShape::TwoBar => {
                let in_y = (0.2..=0.8).contains(&y);
                in_y && ((0.3..=0.34).contains(&x) || (0.6..=0.68).contains(&x))
            }
            ReferenceShape::CheckerCorner => {
                if x < 0.5 || y < 0.5 {
                    return false;
                }
                let cx = ((x - 0.5) / 0.125) as usize;
                let cy = ((y - 0.5) / 0.125) as usize;
                (cx + cy) % 2 == 0
            }
        }
    }

    pub fn render<T: Scalar>(self, width: usize, height: usize) -> RenderGrid<T> {
        const SS: usize = 4;
        let mut pixels = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                let mut hits = 0usize;
                for a in 0..SS {
                    for b in 0..SS {
                        let x = (j as f64 + (b as f64 + 0.5) / SS as f64) / width as f64;
                        let y = (i as f64 + (a as f64 + 0.5) / SS as f64) / height as f64;
                        hits += usize::from(self.inside(x, y));
                    }
                }
                pixels.push(T::lit(hits as f64 / (SS * SS) as f64));
            }
        }
        RenderGrid {
            width,
            height,
            pixels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel<T> {
    /// Clean image in `[0, 1]`, also used for evaluation.
    pub reference: RenderGrid<T>,
    pub noise_sigma: T,
    /// Log-space std of the per-step gradient multiplier.
    pub magnitude_jitter_sigma: T,
    /// Amplitude of the per-step random shift (scene units) and rotation
    /// (radians) applied to the reference before noising. Zero disables it.
    pub view_jitter: T,
    pub mode: SupervisionMode,
}

impl<T: Scalar> TargetModel<T> {
    pub fn reconstruction(reference: RenderGrid<T>) -> Self {
        Self {
            reference,
            noise_sigma: T::zero(),
            magnitude_jitter_sigma: T::zero(),
            view_jitter: T::zero(),
            mode: SupervisionMode::Reconstruction,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.noise_sigma >= T::zero()) {
            return Err("noise_sigma must be non-negative".into());
        }
        if !(self.magnitude_jitter_sigma >= T::zero()) {
            return Err("magnitude_jitter_sigma must be non-negative".into());
        }
        if !(self.view_jitter >= T::zero()) {
            return Err("view_jitter must be non-negative".into());
        }
        if self
            .reference
            .pixels
            .iter()
            .any(|&p| !(p >= T::zero() && p <= T::one()))
        {
            return Err("reference pixels must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// `E[lambda] = exp(sigma^2 / 2)`.
    pub fn mean_multiplier(&self) -> T {
        match self.mode {
            SupervisionMode::Reconstruction => T::one(),
            SupervisionMode::Generative => {
                let s = self.magnitude_jitter_sigma;
                (s * s / T::lit(2.0)).exp()
            }
        }
    }
}

/// Independent generator for one `(seed, step)` pair.
pub(crate) fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// Draws the target and gradient multiplier for `step`. Deterministic in
/// `(seed, step)`.
pub fn sample_pseudo_target<T: Scalar>(
    model: &TargetModel<T>,
    step: u64,
    seed: u64,
) -> (RenderGrid<T>, T) {
    if model.mode == SupervisionMode::Reconstruction {
        return (model.reference.clone(), T::one());
    }
    let mut rng = step_rng(seed, step);
    let z: f64 = rng.sample(StandardNormal);
    let lambda = (model.magnitude_jitter_sigma * T::lit(z)).exp();

    let mut target = if model.view_jitter > T::zero() {
        let a = model.view_jitter.to_f64_lossy();
        let shift = [rng.random_range(-a..=a), rng.random_range(-a..=a)];
        let angle = rng.random_range(-a..=a);
        warp(&model.reference, shift, angle)
    } else {
        model.reference.clone()
    };
    if model.noise_sigma > T::zero() {
        for px in &mut target.pixels {
            let eta: f64 = rng.sample(StandardNormal);
            *px += model.noise_sigma * T::lit(eta);
        }
    }
    (target, lambda)
}

/// Rotates about the image center by `angle` then shifts, sampling the source
/// bilinearly with zero outside the domain.
fn warp<T: Scalar>(src: &RenderGrid<T>, shift: [f64; 2], angle: f64) -> RenderGrid<T> {
    let (w, h) = (src.width, src.height);
    let (sin, cos) = angle.sin_cos();
    let sample = |x: f64, y: f64| -> f64 {
        // continuous pixel coordinates
        let u = x * w as f64 - 0.5;
        let v = y * h as f64 - 0.5;
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = (u - u0, v - v0);
        let get = |c: f64, r: f64| -> f64 {
            if c < 0.0 || r < 0.0 || c >= w as f64 || r >= h as f64 {
                0.0
            } else {
                src.at(r as usize, c as usize).to_f64_lossy()
            }
        };
        let top = get(u0, v0) * (1.0 - fu) + get(u0 + 1.0, v0) * fu;
        let bottom = get(u0, v0 + 1.0) * (1.0 - fu) + get(u0 + 1.0, v0 + 1.0) * fu;
        top * (1.0 - fv) + bottom * fv
    };
    RenderGrid::from_fn(w, h, |x: T, y: T| {
        // inverse map: undo shift, then undo rotation about center
        let (x, y) = (x.to_f64_lossy() - shift[0] - 0.5, y.to_f64_lossy() - shift[1] - 0.5);
        let sx = cos * x + sin * y + 0.5;
        let sy = -sin * x + cos * y + 0.5;
        T::lit(sample(sx, sy))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(mode: SupervisionMode, sigma_n: f64, sigma_ln: f64) -> TargetModel<f64> {
        TargetModel {
            reference: ReferenceShape::Ring.render(32, 32),
            noise_sigma: sigma_n,
            magnitude_jitter_sigma: sigma_ln,
            view_jitter: 0.0,
            mode,
        }
    }

    #[test]
    fn shapes_are_in_unit_range_and_nonempty() {
        for shape in ReferenceShape::ALL {
            let img: RenderGrid<f64> = shape.render(64, 64);
            assert!(img.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
            assert!(img.pixels.iter().any(|&p| p > 0.5), "{}", shape.name());
            assert_eq!(ReferenceShape::parse(shape.name()), Some(shape));
        }
    }

    #[test]
    fn reconstruction_returns_reference() {
        let m = model(SupervisionMode::Reconstruction, 0.3, 1.0);
        for step in 0..5 {
            let (t, l) = sample_pseudo_target(&m, step, 11);
            assert_eq!(t, m.reference);
            assert_eq!(l, 1.0);
        }
    }

    #[test]
    fn noise_free_generative_matches_reconstruction() {
        let m = model(SupervisionMode::Generative, 0.0, 0.0);
        let (t, l) = sample_pseudo_target(&m, 3, 11);
        assert_eq!(t, m.reference);
        assert_eq!(l, 1.0);
    }

    #[test]
    fn targets_depend_only_on_seed_and_step() {
        let m = model(SupervisionMode::Generative, 0.2, 1.5);
        assert_eq!(sample_pseudo_target(&m, 9, 4), sample_pseudo_target(&m, 9, 4));
        assert_ne!(sample_pseudo_target(&m, 9, 4).0, sample_pseudo_target(&m, 10, 4).0);
        assert_ne!(sample_pseudo_target(&m, 9, 4).0, sample_pseudo_target(&m, 9, 5).0);
    }

    #[test]
    fn zero_warp_is_identity() {
        let m = model(SupervisionMode::Generative, 0.0, 0.0);
        let w = warp(&m.reference, [0.0, 0.0], 0.0);
        for (a, b) in w.pixels.iter().zip(&m.reference.pixels) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn view_jitter_perturbs_target() {
        let mut m = model(SupervisionMode::Generative, 0.0, 0.0);
        m.view_jitter = 0.03;
        let (t, _) = sample_pseudo_target(&m, 1, 2);
        assert_ne!(t, m.reference);
        assert!(t.pixels.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
    }
}
