//! Flat binary dataset cache.
//!
//! ```text
//! "ACDS" | version u32 | n u32 | k u32 | o u32 | count u32
//! count x ( n x f32 features | k x u8 concepts | u16 label )
//! ```
//! All integers and floats little-endian.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{Dataset, DatasetMeta, Variant};
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"ACDS";
pub const CACHE_VERSION: u32 = 1;

pub fn write_cache(dataset: &Dataset) -> Vec<u8> {
    let m = &dataset.meta;
    let per_sample = 4 * m.n + m.k + 2;
    let mut out = Vec::with_capacity(24 + per_sample * dataset.len());
    out.extend_from_slice(CACHE_MAGIC);
    for v in [CACHE_VERSION, m.n as u32, m.k as u32, m.o as u32, dataset.len() as u32] {
        out.write_u32::<LittleEndian>(v).unwrap();
    }
    for i in 0..dataset.len() {
        let s = dataset.sample(i);
        for &v in s.x {
            out.write_f32::<LittleEndian>(v).unwrap();
        }
        out.extend(s.c.iter());
        out.write_u16::<LittleEndian>(s.y as u16).unwrap();
    }
    out
}

/// Parses a cache written by [`write_cache`]. The format does not record
/// the variant or concept names, so the caller supplies the variant and
/// names default to `c0..`.
pub fn read_cache(bytes: &[u8], variant: Variant) -> Result<Dataset> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| truncated())?;
    if &magic != CACHE_MAGIC {
        return Err(Error::format("dataset cache", "bad magic"));
    }
    let mut header = [0u32; 5];
    for h in &mut header {
        *h = cur.read_u32::<LittleEndian>().map_err(|_| truncated())?;
    }
    let [version, n, k, o, count] = header.map(|v| v as usize);
    if version != CACHE_VERSION as usize {
        return Err(Error::format("dataset cache", format!("unsupported version {version}")));
    }
    let expected = count * (4 * n + k + 2);
    let remaining = bytes.len() - cur.position() as usize;
    if remaining != expected {
        return Err(Error::format(
            "dataset cache",
            format!("payload is {remaining} bytes, header implies {expected}"),
        ));
    }

    let mut x = Array2::zeros((count, n));
    let mut concepts = Array2::zeros((count, k));
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        for j in 0..n {
            x[[i, j]] = cur.read_f32::<LittleEndian>().map_err(|_| truncated())?;
        }
        for j in 0..k {
            concepts[[i, j]] = cur.read_u8().map_err(|_| truncated())?;
        }
        labels.push(cur.read_u16::<LittleEndian>().map_err(|_| truncated())? as usize);
    }
    let image_shape = match (variant, n) {
        (Variant::Grey, 784) => Some((1, 28, 28)),
        (Variant::Grey | Variant::Rgb, 2352) => Some((3, 28, 28)),
        _ => None,
    };
    let concept_names = if k == 10 && image_shape.is_some() {
        (0..10).map(|d| format!("digit_{d}")).collect()
    } else {
        (0..k).map(|j| format!("c{j}")).collect()
    };
    let meta = DatasetMeta {
        n,
        k,
        o,
        concept_names,
        variant,
        image_shape,
    };
    Dataset::new(meta, x, concepts, labels)
}

fn truncated() -> Error {
    Error::format("dataset cache", "truncated")
}
