//! File formats: PGM images, PLY export and binary snapshots.

pub mod pgm;
pub mod snapshot;

pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use snapshot::{
    decode_snapshot, encode_snapshot, ply_ascii, read_snapshot, record_len, storage_bytes,
    write_ply, write_snapshot, Snapshot, SNAPSHOT_HEADER_LEN,
};
