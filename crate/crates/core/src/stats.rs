//! Order statistics over primitive populations.

use std::cmp::Ordering;

use serde::Serialize;

use crate::scalar::Scalar;

fn ascending<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Quantile by linear interpolation between the closest order statistics
/// (position `(n - 1) * level` in the sorted sample).
///
/// Returns `None` for an empty sample. `level` is clamped to `[0, 1]`.
pub fn quantile<T: Scalar>(values: &[T], level: T) -> Option<T> {
    quantile_in_place(&mut values.to_vec(), level)
}

/// As [`quantile`], reordering `values` by selection instead of a full sort.
pub fn quantile_in_place<T: Scalar>(values: &mut [T], level: T) -> Option<T> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let (lo_idx, frac) = position(n, level)?;
    let (_, &mut a, upper) = values.select_nth_unstable_by(lo_idx, ascending);
    let b = if frac == T::zero() {
        a
    } else {
        upper.iter().copied().min_by(ascending).unwrap_or(a)
    };
    Some(interpolate(a, b, frac))
}

fn position<T: Scalar>(n: usize, level: T) -> Option<(usize, T)> {
    let level = level.max(T::zero()).min(T::one());
    let h = T::from_usize(n - 1)? * level;
    let lo = h.floor();
    Some((lo.to_usize()?.min(n - 1), h - lo))
}

fn interpolate<T: Scalar>(a: T, b: T, frac: T) -> T {
    if frac == T::zero() || a == b {
        a
    } else {
        a + frac * (b - a)
    }
}

/// As [`quantile`], for an already ascending slice.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], level: T) -> Option<T> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let (lo_idx, frac) = position(n, level)?;
    let hi_idx = (lo_idx + 1).min(n - 1);
    Some(interpolate(sorted[lo_idx], sorted[hi_idx], frac))
}

/// Mean, median and 0.9-quantile of a sample; all zero for an empty one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Summary<T> {
    pub mean: T,
    pub median: T,
    pub q90: T,
}

pub fn summarize<T: Scalar>(values: &[T]) -> Summary<T> {
    if values.is_empty() {
        return Summary {
            mean: T::zero(),
            median: T::zero(),
            q90: T::zero(),
        };
    }
    let n = T::from_usize(values.len()).unwrap_or_else(T::one);
    let mut scratch = values.to_vec();
    Summary {
        mean: pairwise_sum(values) / n,
        median: quantile_in_place(&mut scratch, T::lit(0.5)).unwrap_or_else(T::zero),
        q90: quantile_in_place(&mut scratch, T::lit(0.9)).unwrap_or_else(T::zero),
    }
}

/// Pairwise (cascade) summation with a fixed split order.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().fold(T::zero(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
