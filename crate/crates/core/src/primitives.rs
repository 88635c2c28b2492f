//! The mutable population of isotropic 2D Gaussian splats.
//!
//! Primitives live in the unit square. Every primitive carries a stable id
//! drawn from a monotone counter; ids are never recycled within a run so they
//! can be used as join keys in logs and traces.
//!
//! Structural operators (split, clone, prune) never touch side tables
//! directly. They return a [`Lineage`] describing where every surviving slot
//! came from, and every table aligned with the population (moment states,
//! accumulators, optimizer state) is re-indexed through it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, Vec2};

pub type PrimitiveId = u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive<T> {
    pub position: Vec2<T>,
    /// Isotropic standard deviation in scene units.
    pub scale: T,
    pub opacity: T,
    /// Optimization steps since this primitive was instantiated.
    pub age: u64,
}

impl<T: Scalar> Primitive<T> {
    pub fn new(position: Vec2<T>, scale: T, opacity: T) -> Self {
        Self {
            position,
            scale,
            opacity,
            age: 0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.position[0].is_finite()
            && self.position[1].is_finite()
            && self.scale.is_finite()
            && self.scale > T::zero()
            && self.opacity >= T::zero()
            && self.opacity <= T::one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    #[default]
    Grid,
    UniformRandom,
}

/// Where a slot of a re-indexed population came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Carried over from this index of the previous population.
    Kept(usize),
    /// Newly instantiated from the primitive at this previous index.
    Fresh { parent: usize },
}

/// Per-slot provenance produced by a structural operation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lineage {
    pub origins: Vec<Origin>,
}

impl Lineage {
    pub fn identity(n: usize) -> Self {
        Self {
            origins: (0..n).map(Origin::Kept).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Re-indexes an aligned table: kept slots copy their old entry, fresh
    /// slots get `fresh()`.
    pub fn remap<V: Clone>(&self, old: &[V], mut fresh: impl FnMut() -> V) -> Vec<V> {
        self.origins
            .iter()
            .map(|o| match *o {
                Origin::Kept(i) => old[i].clone(),
                Origin::Fresh { .. } => fresh(),
            })
            .collect()
    }

    /// Composes `self` (applied first) with `next`.
    pub fn then(&self, next: &Lineage) -> Lineage {
        let origins = next
            .origins
            .iter()
            .map(|o| match *o {
                Origin::Kept(i) => self.origins[i],
                Origin::Fresh { parent } => Origin::Fresh {
                    parent: match self.origins[parent] {
                        Origin::Kept(p) | Origin::Fresh { parent: p } => p,
                    },
                },
            })
            .collect();
        Lineage { origins }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population<T> {
    primitives: Vec<Primitive<T>>,
    ids: Vec<PrimitiveId>,
    next_id: PrimitiveId,
}

impl<T: Scalar> Default for Population<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Population<T> {
    pub fn new() -> Self {
        Self {
            primitives: Vec::new(),
            ids: Vec::new(),
            next_id: 0,
        }
    }

    /// Builds a population from primitives, assigning ids `0..n`.
    pub fn from_primitives(primitives: Vec<Primitive<T>>) -> Self {
        let n = primitives.len() as PrimitiveId;
        Self {
            ids: (0..n).collect(),
            primitives,
            next_id: n,
        }
    }

    /// Reassembles a population with explicit ids, e.g. from a snapshot.
    pub fn from_parts(
        primitives: Vec<Primitive<T>>,
        ids: Vec<PrimitiveId>,
        next_id: PrimitiveId,
    ) -> Result<Self> {
        if primitives.len() != ids.len() {
            return Err(Error::Alignment {
                expected: primitives.len(),
                got: ids.len(),
            });
        }
        let pop = Self {
            primitives,
            ids,
            next_id,
        };
        pop.audit()?;
        Ok(pop)
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn primitives(&self) -> &[Primitive<T>] {
        &self.primitives
    }

    pub fn primitives_mut(&mut self) -> &mut [Primitive<T>] {
        &mut self.primitives
    }

    pub fn ids(&self) -> &[PrimitiveId] {
        &self.ids
    }

    pub fn next_id(&self) -> PrimitiveId {
        self.next_id
    }

    pub fn get(&self, index: usize) -> Option<&Primitive<T>> {
        self.primitives.get(index)
    }

    pub fn push(&mut self, primitive: Primitive<T>) -> PrimitiveId {
        let id = self.next_id;
        self.next_id += 1;
        self.primitives.push(primitive);
        self.ids.push(id);
        id
    }

    pub fn iter(&self) -> impl Iterator<Item = (PrimitiveId, &Primitive<T>)> {
        self.ids.iter().copied().zip(self.primitives.iter())
    }

    pub fn age_all(&mut self) {
        for p in &mut self.primitives {
            p.age = p.age.saturating_add(1);
        }
    }

    /// Rebuilds the population from `(origin, primitive)` pairs. Kept slots
    /// retain their id; fresh slots receive new ids in sequence order.
    pub(crate) fn rebuild(&mut self, slots: Vec<(Origin, Primitive<T>)>) -> Lineage {
        let mut primitives = Vec::with_capacity(slots.len());
        let mut ids = Vec::with_capacity(slots.len());
        let mut origins = Vec::with_capacity(slots.len());
        for (origin, prim) in slots {
            let id = match origin {
                Origin::Kept(i) => self.ids[i],
                Origin::Fresh { .. } => {
                    let id = self.next_id;
                    self.next_id += 1;
                    id
                }
            };
            primitives.push(prim);
            ids.push(id);
            origins.push(origin);
        }
        self.primitives = primitives;
        self.ids = ids;
        Lineage { origins }
    }

    /// Checks every primitive invariant and id uniqueness.
    pub fn audit(&self) -> Result<()> {
        if self.primitives.len() != self.ids.len() {
            return Err(Error::Alignment {
                expected: self.primitives.len(),
                got: self.ids.len(),
            });
        }
        let mut seen = self.ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate primitive id".into()));
        }
        if let Some(&max) = seen.last() {
            if max >= self.next_id {
                return Err(Error::InvalidConfig(format!(
                    "id {max} not below id counter {}",
                    self.next_id
                )));
            }
        }
        for (id, p) in self.iter() {
            if !p.is_valid() {
                return Err(Error::InvalidConfig(format!(
                    "primitive {id} violates invariants: {p:?}"
                )));
            }
        }
        Ok(())
    }

    /// Sum of opacities, a proxy for how much the population still renders.
    pub fn opacity_mass(&self) -> T {
        self.primitives.iter().map(|p| p.opacity).sum()
    }
}

/// Places `n` primitives in the unit square.
///
/// `Grid` uses the smallest square-ish lattice holding `n` points with cells
/// centered in the domain, row-major, truncated to `n`. `UniformRandom` draws
/// positions from a ChaCha stream seeded by `seed`.
pub fn spawn_initial<T: Scalar>(
    n: usize,
    layout: Layout,
    seed: u64,
    initial_scale: T,
    initial_opacity: T,
) -> Result<Population<T>> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "initial primitive count must be at least 1".into(),
        ));
    }
    if !(initial_scale > T::zero() && initial_scale.is_finite()) {
        return Err(Error::InvalidConfig("initial scale must be positive".into()));
    }
    if !(initial_opacity >= T::zero() && initial_opacity <= T::one()) {
        return Err(Error::InvalidConfig(
            "initial opacity must lie in [0, 1]".into(),
        ));
    }
    let positions: Vec<Vec2<T>> = match layout {
        Layout::Grid => {
            let cols = (n as f64).sqrt().ceil() as usize;
            let rows = n.div_ceil(cols);
            (0..n)
                .map(|k| {
                    let (r, c) = (k / cols, k % cols);
                    [
                        T::lit((c as f64 + 0.5) / cols as f64),
                        T::lit((r as f64 + 0.5) / rows as f64),
                    ]
                })
                .collect()
        }
        Layout::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| [T::lit(rng.random::<f64>()), T::lit(rng.random::<f64>())])
                .collect()
        }
    };
    Ok(Population::from_primitives(
        positions
            .into_iter()
            .map(|p| Primitive::new(p, initial_scale, initial_opacity))
            .collect(),
    ))
}
