//! Additive 2D Gaussian splatting with analytic gradients.
//!
//! The image model is
//!
//! ```text
//! I(p) = sum_i alpha_i * exp(-|p - mu_i|^2 / (2 s_i^2))
//! ```
//!
//! evaluated at pixel centers `((j + 0.5) / W, (i + 0.5) / H)` of the unit
//! square, with loss `L = mean_p (I(p) - T(p))^2`. The kernel is separable, so
//! each primitive evaluates `O(W + H)` exponentials and touches only pixels in
//! its footprint when a cutoff radius is set.

mod optim;
mod target;

pub use optim::{AdamSlot, LrSchedule, ParamOptimizer};
pub use target::{sample_pseudo_target, ReferenceShape, SupervisionMode, TargetModel};

use rayon::prelude::*;

use crate::primitives::{Population, Primitive};
use crate::scalar::{Scalar, Vec2};
use crate::stats::pairwise_sum;

/// Row-major scalar image over the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrid<T> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<T>,
}

impl<T: Scalar> RenderGrid<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![T::zero(); width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(T, T) -> T) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                let (x, y) = pixel_center::<T>(j, i, width, height);
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.pixels[row * self.width + col]
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean squared difference; `None` on a dimension mismatch.
    pub fn mse(&self, other: &Self) -> Option<T> {
        if !self.same_dims(other) {
            return None;
        }
        let sq: Vec<T> = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| (a - b) * (a - b))
            .collect();
        Some(pairwise_sum(&sq) / T::from_usize(sq.len().max(1))?)
    }
}

#[inline]
pub fn pixel_center<T: Scalar>(col: usize, row: usize, width: usize, height: usize) -> (T, T) {
    (
        T::lit((col as f64 + 0.5) / width as f64),
        T::lit((row as f64 + 0.5) / height as f64),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings<T> {
    /// Footprint radius in units of each primitive's scale. `None` evaluates
    /// every primitive on every pixel.
    pub cutoff_sigmas: Option<T>,
}

impl<T: Scalar> Default for RenderSettings<T> {
    fn default() -> Self {
        Self {
            cutoff_sigmas: Some(T::lit(5.0)),
        }
    }
}

impl<T: Scalar> RenderSettings<T> {
    pub fn exact() -> Self {
        Self {
            cutoff_sigmas: None,
        }
    }
}

/// Separable kernel factors over a primitive's pixel window.
struct Footprint<'a, T> {
    col0: usize,
    row0: usize,
    /// `exp(-dx^2 / 2s^2)` and `dx` per column in the window.
    fx: &'a [(T, T)],
    fy: &'a [(T, T)],
}

fn axis_window<T: Scalar>(center: T, radius: Option<T>, n: usize) -> (usize, usize) {
    match radius {
        None => (0, n),
        Some(r) => {
            let nf = T::from_usize(n).unwrap_or_else(T::one);
            let half = T::lit(0.5);
            let lo = ((center - r) * nf - half).ceil();
            let hi = ((center + r) * nf - half).floor();
            if !(lo.is_finite() && hi.is_finite()) {
                return (0, 0);
            }
            let lo = lo.max(T::zero()).to_usize().unwrap_or(0);
            let hi = hi.to_f64().unwrap_or(-1.0);
            if hi < 0.0 {
                return (0, 0);
            }
            let hi = (hi as usize).min(n.saturating_sub(1));
            if lo > hi {
                (0, 0)
            } else {
                (lo, hi + 1)
            }
        }
    }
}

/// Appends `(exp(-d^2 * inv), d)` for pixels `lo..hi` of an axis with `n`
/// pixels, where `d` is the offset of the pixel center from `center`.
///
/// The exponentials come from a ratio recurrence walking outward from the
/// pixel nearest the center, so every multiplier is at most one and the
/// factors decay monotonically instead of overflowing.
fn axis_factors<T: Scalar>(center: T, inv: T, lo: usize, hi: usize, n: usize, out: &mut Vec<(T, T)>) {
    if hi <= lo {
        return;
    }
    let nf = n as f64;
    let offset = |k: usize| T::lit((k as f64 + 0.5) / nf) - center;
    let base = out.len();
    out.extend((lo..hi).map(|k| (T::zero(), offset(k))));
    let row = &mut out[base..];
    let peak = (center.to_f64().unwrap_or(0.0) * nf - 0.5)
        .round()
        .clamp(lo as f64, (hi - 1) as f64) as usize
        - lo;
    let step = T::lit(1.0 / nf);
    let decay = (-(T::lit(2.0) * step * step) * inv).exp();
    let dc = row[peak].1;
    row[peak].0 = (-(dc * dc) * inv).exp();
    // e(k+1) = e(k) * exp(-(2 d_k h + h^2) inv), and that ratio shrinks by
    // `decay` per pixel; symmetrically to the left.
    let mut ratio = (-(T::lit(2.0) * dc * step + step * step) * inv).exp();
    for k in peak + 1..row.len() {
        row[k].0 = row[k - 1].0 * ratio;
        ratio *= decay;
    }
    let mut ratio = ((T::lit(2.0) * dc * step - step * step) * inv).exp();
    for k in (0..peak).rev() {
        row[k].0 = row[k + 1].0 * ratio;
        ratio *= decay;
    }
}

/// Kernel factors for a whole population in one flat buffer.
struct Footprints<T> {
    /// `(col0, row0, start, nx, ny)` per primitive; `fx` then `fy` are stored
    /// contiguously from `start`.
    meta: Vec<(usize, usize, usize, usize, usize)>,
    factors: Vec<(T, T)>,
}

impl<T: Scalar> Footprints<T> {
    fn build(prims: &[Primitive<T>], width: usize, height: usize, settings: &RenderSettings<T>) -> Self {
        let mut meta = Vec::with_capacity(prims.len());
        let mut factors = Vec::new();
        for p in prims {
            let radius = settings.cutoff_sigmas.map(|c| c * p.scale);
            let inv = T::one() / (T::lit(2.0) * p.scale * p.scale);
            let start = factors.len();
            let (c0, c1) = axis_window(p.position[0], radius, width);
            axis_factors(p.position[0], inv, c0, c1, width, &mut factors);
            let (r0, r1) = axis_window(p.position[1], radius, height);
            axis_factors(p.position[1], inv, r0, r1, height, &mut factors);
            meta.push((c0, r0, start, c1 - c0, r1 - r0));
        }
        Self { meta, factors }
    }

    #[inline]
    fn get(&self, i: usize) -> Footprint<'_, T> {
        let (col0, row0, start, nx, ny) = self.meta[i];
        Footprint {
            col0,
            row0,
            fx: &self.factors[start..start + nx],
            fy: &self.factors[start + nx..start + nx + ny],
        }
    }
}

/// Renders the population onto a `width x height` grid.
pub fn render<T: Scalar>(
    pop: &Population<T>,
    width: usize,
    height: usize,
    settings: &RenderSettings<T>,
) -> RenderGrid<T> {
    let fps = Footprints::build(pop.primitives(), width, height, settings);
    render_from(pop.primitives(), &fps, width, height)
}

fn render_from<T: Scalar>(
    prims: &[Primitive<T>],
    fps: &Footprints<T>,
    width: usize,
    height: usize,
) -> RenderGrid<T> {
    let mut img = RenderGrid::zeros(width, height);
    for (i, p) in prims.iter().enumerate() {
        let fp = fps.get(i);
        for (di, &(ey, _)) in fp.fy.iter().enumerate() {
            let start = (fp.row0 + di) * width + fp.col0;
            let row = &mut img.pixels[start..start + fp.fx.len()];
            let a = p.opacity * ey;
            for (px, &(ex, _)) in row.iter_mut().zip(fp.fx) {
                *px += a * ex;
            }
        }
    }
    img
}

/// Loss gradient for one primitive in natural parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrimitiveGrad<T> {
    pub position: Vec2<T>,
    pub scale: T,
    pub opacity: T,
}

impl<T: Scalar> PrimitiveGrad<T> {
    pub fn scaled(self, k: T) -> Self {
        Self {
            position: [self.position[0] * k, self.position[1] * k],
            scale: self.scale * k,
            opacity: self.opacity * k,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub loss: T,
    pub render: RenderGrid<T>,
    pub grads: Vec<PrimitiveGrad<T>>,
}

/// MSE against `target` and its analytic gradient for every primitive.
///
/// Returns `None` if `target` is empty. Per-primitive gradients are reduced in
/// a fixed pixel order, so results do not depend on the thread count.
pub fn loss_and_grads<T: Scalar>(
    pop: &Population<T>,
    target: &RenderGrid<T>,
    settings: &RenderSettings<T>,
) -> Option<Evaluation<T>> {
    let (w, h) = (target.width, target.height);
    if w * h == 0 {
        return None;
    }
    let prims = pop.primitives();
    let fps = Footprints::build(prims, w, h, settings);
    let render = render_from(prims, &fps, w, h);
    let residual: Vec<T> = render
        .pixels
        .iter()
        .zip(&target.pixels)
        .map(|(&a, &b)| a - b)
        .collect();
    let hw = T::from_usize(w * h)?;
    let sq: Vec<T> = residual.iter().map(|&r| r * r).collect();
    let loss = pairwise_sum(&sq) / hw;
    let coef = T::lit(2.0) / hw;

    let grads = prims
        .par_iter()
        .enumerate()
        .map(|(i, p)| primitive_grad(p, &fps.get(i), &residual, w, coef))
        .collect();
    Some(Evaluation {
        loss,
        render,
        grads,
    })
}

fn primitive_grad<T: Scalar>(
    p: &Primitive<T>,
    fp: &Footprint<'_, T>,
    residual: &[T],
    width: usize,
    coef: T,
) -> PrimitiveGrad<T> {
    // Accumulate sum r*e, sum r*e*dx, sum r*e*dy, sum r*e*d^2.
    let (mut s0, mut sx, mut sy, mut sd) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (di, &(ey, dy)) in fp.fy.iter().enumerate() {
        let row = &residual[(fp.row0 + di) * width + fp.col0..][..fp.fx.len()];
        let (mut r0, mut rx, mut rxx) = (T::zero(), T::zero(), T::zero());
        for (&r, &(ex, dx)) in row.iter().zip(fp.fx) {
            let re = r * ex;
            r0 += re;
            rx += re * dx;
            rxx += re * dx * dx;
        }
        s0 += ey * r0;
        sx += ey * rx;
        sy += ey * dy * r0;
        sd += ey * (rxx + dy * dy * r0);
    }
    let s2 = p.scale * p.scale;
    let a = coef * p.opacity;
    PrimitiveGrad {
        position: [a * sx / s2, a * sy / s2],
        scale: a * sd / (s2 * p.scale),
        opacity: coef * s0,
    }
}

/// Per-component standard deviation of the positional gradient induced by
/// i.i.d. pixel noise of std `noise_sigma` in the target, before magnitude
/// jitter. Exact for the given geometry.
pub fn positional_noise_std<T: Scalar>(
    p: &Primitive<T>,
    width: usize,
    height: usize,
    noise_sigma: T,
    settings: &RenderSettings<T>,
) -> Vec2<T> {
    let fps = Footprints::build(std::slice::from_ref(p), width, height, settings);
    let fp = fps.get(0);
    let (mut vx, mut vy) = (T::zero(), T::zero());
    for &(ey, dy) in fp.fy {
        for &(ex, dx) in fp.fx {
            let e2 = (ex * ey) * (ex * ey);
            vx += e2 * dx * dx;
            vy += e2 * dy * dy;
        }
    }
    let hw = T::from_usize(width * height).unwrap_or_else(T::one);
    let k = T::lit(2.0) * noise_sigma * p.opacity / (hw * p.scale * p.scale);
    [k * vx.sqrt(), k * vy.sqrt()]
}
