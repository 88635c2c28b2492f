//! Population serialization: ASCII PLY export and the binary snapshot.
//!
//! Snapshot layout (all integers and floats little-endian):
//!
//! | offset | size | field                                        |
//! |--------|------|----------------------------------------------|
//! | 0      | 4    | magic `b"DNSP"`                              |
//! | 4      | 2    | schema version (`1`)                         |
//! | 6      | 1    | scalar width W in bytes (4 = f32, 8 = f64)   |
//! | 7      | 1    | flags; bit 0 set when moment states follow   |
//! | 8      | 8    | record count N                               |
//! | 16     | 8    | next unused primitive id                     |
//!
//! followed by N fixed-width records:
//!
//! `id: u64, x: W, y: W, scale: W, opacity: W, age: u64`
//! and, when flag bit 0 is set, `m_x, m_y, v_x, v_y: W, steps: u64`.
//!
//! Geometry-only records are `16 + 4W` bytes (32 for f32, 48 for f64).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::moments::MomentState;
use crate::primitives::{Population, Primitive};
use crate::scalar::Scalar;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"DNSP";
pub const SNAPSHOT_VERSION: u16 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 24;
const FLAG_MOMENTS: u8 = 1;

/// Bytes per primitive in a snapshot of scalar type `T`.
pub fn record_len<T: Scalar>(with_moments: bool) -> usize {
    let geometry = 16 + 4 * T::WIDTH;
    if with_moments {
        geometry + 8 + 4 * T::WIDTH
    } else {
        geometry
    }
}

/// Size of the geometry-only snapshot: header plus a fixed record per
/// primitive.
pub fn storage_bytes<T: Scalar>(pop: &Population<T>) -> usize {
    SNAPSHOT_HEADER_LEN + pop.len() * record_len::<T>(false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub population: Population<T>,
    pub moments: Option<Vec<MomentState<T>>>,
}

pub fn encode_snapshot<T: Scalar>(
    pop: &Population<T>,
    moments: Option<&[MomentState<T>]>,
) -> Result<Vec<u8>> {
    if let Some(m) = moments {
        if m.len() != pop.len() {
            return Err(Error::Alignment {
                expected: pop.len(),
                got: m.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(
        SNAPSHOT_HEADER_LEN + pop.len() * record_len::<T>(moments.is_some()),
    );
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.push(T::WIDTH as u8);
    out.push(if moments.is_some() { FLAG_MOMENTS } else { 0 });
    out.extend_from_slice(&(pop.len() as u64).to_le_bytes());
    out.extend_from_slice(&pop.next_id().to_le_bytes());
    for (k, (id, p)) in pop.iter().enumerate() {
        out.extend_from_slice(&id.to_le_bytes());
        for v in [p.position[0], p.position[1], p.scale, p.opacity] {
            v.write_le(&mut out);
        }
        out.extend_from_slice(&p.age.to_le_bytes());
        if let Some(m) = moments {
            let s = &m[k];
            for v in [s.m[0], s.m[1], s.v[0], s.v[1]] {
                v.write_le(&mut out);
            }
            out.extend_from_slice(&s.steps.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Snapshot(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn scalar<T: Scalar>(&mut self) -> Result<T> {
        Ok(T::read_le(self.take(T::WIDTH)?))
    }
}

pub fn decode_snapshot<T: Scalar>(bytes: &[u8]) -> Result<Snapshot<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let width = r.take(1)?[0] as usize;
    if width != T::WIDTH {
        return Err(Error::Snapshot(format!(
            "scalar width {width} does not match requested type ({})",
            T::WIDTH
        )));
    }
    let flags = r.take(1)?[0];
    let with_moments = flags & FLAG_MOMENTS != 0;
    let count = r.u64()? as usize;
    let next_id = r.u64()?;
    let expected = SNAPSHOT_HEADER_LEN + count * record_len::<T>(with_moments);
    if bytes.len() != expected {
        return Err(Error::Snapshot(format!(
            "length {} does not match {count} records ({expected} bytes)",
            bytes.len()
        )));
    }
    let mut prims = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(count);
    let mut moments = with_moments.then(|| Vec::with_capacity(count));
    for _ in 0..count {
        ids.push(r.u64()?);
        let position = [r.scalar()?, r.scalar()?];
        let scale = r.scalar()?;
        let opacity = r.scalar()?;
        let age = r.u64()?;
        prims.push(Primitive {
            position,
            scale,
            opacity,
            age,
        });
        if let Some(ms) = moments.as_mut() {
            let m = [r.scalar()?, r.scalar()?];
            let v = [r.scalar()?, r.scalar()?];
            let steps = r.u64()?;
            ms.push(MomentState { m, v, steps });
        }
    }
    let population = Population::from_parts(prims, ids, next_id)
        .map_err(|e| Error::Snapshot(format!("invalid population: {e}")))?;
    Ok(Snapshot {
        population,
        moments,
    })
}

/// ASCII PLY with `x y z scale opacity` per vertex, rendered from 32-bit
/// floats in shortest round-trip decimal. `z` is always `0`.
pub fn ply_ascii<T: Scalar>(pop: &Population<T>) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", pop.len());
    for name in ["x", "y", "z", "scale", "opacity"] {
        let _ = writeln!(s, "property float {name}");
    }
    s.push_str("end_header\n");
    for p in pop.primitives() {
        let f = |v: T| v.to_f32().unwrap_or(f32::NAN);
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            f(p.position[0]),
            f(p.position[1]),
            0.0f32,
            f(p.scale),
            f(p.opacity)
        );
    }
    s
}

pub fn write_ply<T: Scalar>(path: &Path, pop: &Population<T>) -> Result<()> {
    fs::write(path, ply_ascii(pop)).map_err(|e| Error::export(path, e))
}

pub fn write_snapshot<T: Scalar>(
    path: &Path,
    pop: &Population<T>,
    moments: Option<&[MomentState<T>]>,
) -> Result<()> {
    let bytes = encode_snapshot(pop, moments)?;
    fs::write(path, bytes).map_err(|e| Error::export(path, e))
}

pub fn read_snapshot<T: Scalar>(path: &Path) -> Result<Snapshot<T>> {
    let bytes = fs::read(path).map_err(|e| Error::export(path, e))?;
    decode_snapshot(&bytes)
}
