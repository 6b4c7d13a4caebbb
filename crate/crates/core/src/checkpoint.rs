//! The "ACBM" checkpoint container shared by every model kind.
//!
//! ```text
//! "ACBM" | version u32 | tensor count u32
//! per tensor: name_len u16 | name utf-8 | ndim u8 | dims u32 x ndim | f32 payload
//! metadata_len u32 | metadata (JSON text)
//! ```
//! All integers and floats little-endian. Models namespace their tensors
//! (`bb.`, `g.`, `f.`, `psi_c.`, `psi_y.`).

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::nn::{Dense, FeedForwardNet, LayerSpec};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ACBM";
pub const VERSION: u32 = 1;

/// Named `f32` array, the on-disk unit of a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::Shape(format!(
                "tensor {name}: shape {shape:?} does not hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor {name}")));
        }
        Ok(Self { name, shape, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
    pub metadata: String,
}

impl Checkpoint {
    pub fn new<M: Serialize>(tensors: Vec<Tensor>, metadata: &M) -> Result<Self> {
        Ok(Self {
            tensors,
            metadata: serde_json::to_string(metadata)?,
        })
    }

    pub fn metadata<M: DeserializeOwned>(&self) -> Result<M> {
        Ok(serde_json::from_str(&self.metadata)?)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.tensors.len() as u32).unwrap();
        for t in &self.tensors {
            out.write_u16::<LittleEndian>(t.name.len() as u16).unwrap();
            out.extend_from_slice(t.name.as_bytes());
            out.write_u8(t.shape.len() as u8).unwrap();
            for &d in &t.shape {
                out.write_u32::<LittleEndian>(d as u32).unwrap();
            }
            for &v in &t.values {
                out.write_f32::<LittleEndian>(v).unwrap();
            }
        }
        out.write_u32::<LittleEndian>(self.metadata.len() as u32).unwrap();
        out.extend_from_slice(self.metadata.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
        if &magic != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = cur.read_u32::<LittleEndian>().map_err(|_| truncated("version"))?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let count = cur.read_u32::<LittleEndian>().map_err(|_| truncated("tensor count"))?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = cur.read_u16::<LittleEndian>().map_err(|_| truncated("tensor name"))?;
            let mut name = vec![0u8; name_len as usize];
            cur.read_exact(&mut name).map_err(|_| truncated("tensor name"))?;
            let name = String::from_utf8(name).map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?;
            let ndim = cur.read_u8().map_err(|_| truncated("tensor rank"))?;
            let mut shape = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                shape.push(cur.read_u32::<LittleEndian>().map_err(|_| truncated("tensor dims"))? as usize);
            }
            let len: usize = shape.iter().product();
            let remaining = bytes.len() - cur.position() as usize;
            if len.saturating_mul(4) > remaining {
                return Err(truncated("tensor payload"));
            }
            let mut values = vec![0f32; len];
            cur.read_f32_into::<LittleEndian>(&mut values)
                .map_err(|_| truncated("tensor payload"))?;
            tensors.push(Tensor::new(name, shape, values)?);
        }
        let meta_len = cur.read_u32::<LittleEndian>().map_err(|_| truncated("metadata"))?;
        let mut meta = vec![0u8; meta_len as usize];
        cur.read_exact(&mut meta).map_err(|_| truncated("metadata"))?;
        if cur.position() as usize != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        let metadata = String::from_utf8(meta).map_err(|_| Error::format("checkpoint", "metadata is not UTF-8"))?;
        Ok(Self { tensors, metadata })
    }

    /// Hex SHA-256 of the serialized bytes; this is the identity recorded
    /// when one model is trained against another.
    pub fn hash(&self) -> String {
        hash_bytes(&self.to_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Tensors `{prefix}{i}.weight` / `{prefix}{i}.bias` for every layer.
pub fn net_tensors(prefix: &str, net: &FeedForwardNet<f32>) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(2 * net.depth());
    for (i, layer) in net.layers().iter().enumerate() {
        let (rows, cols) = layer.weight.dim();
        out.push(Tensor {
            name: format!("{prefix}{i}.weight"),
            shape: vec![rows, cols],
            values: layer.weight.iter().copied().collect(),
        });
        out.push(Tensor {
            name: format!("{prefix}{i}.bias"),
            shape: vec![layer.bias.len()],
            values: layer.bias.to_vec(),
        });
    }
    out
}

pub fn net_from_tensors(prefix: &str, specs: &[LayerSpec], ckpt: &Checkpoint) -> Result<FeedForwardNet<f32>> {
    let layers = specs
        .iter()
        .enumerate()
        .map(|(i, &spec)| {
            let w = ckpt.tensor(&format!("{prefix}{i}.weight"))?;
            let b = ckpt.tensor(&format!("{prefix}{i}.bias"))?;
            if w.shape != [spec.out_dim, spec.in_dim] || b.shape != [spec.out_dim] {
                return Err(Error::format(
                    "checkpoint",
                    format!("layer {prefix}{i} shapes {:?}/{:?} disagree with metadata", w.shape, b.shape),
                ));
            }
            let weight = Array2::from_shape_vec((spec.out_dim, spec.in_dim), w.values.clone())
                .map_err(|e| Error::Shape(e.to_string()))?;
            Dense::from_parts(spec, weight, Array1::from(b.values.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    FeedForwardNet::from_layers(layers)
}

fn truncated(what: &str) -> Error {
    Error::format("checkpoint", format!("truncated {what}"))
}
