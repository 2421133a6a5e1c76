//! Single-file weight checkpoints.
//!
//! Layout: the magic line `CEDC-CKPT-1\n`, a little-endian `u64` header length, a TOML
//! header (model config, element type, step, free-form metadata), a `u32` parameter count,
//! then per parameter: `u32` name length, UTF-8 name, `u32` rank, `u64` dims, and the
//! little-endian element payload.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::TransformerConfig;
use crate::error::{NnError, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8] = b"CEDC-CKPT-1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dtype: String,
    step: u64,
    model: TransformerConfig,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<F> {
    pub config: TransformerConfig,
    pub store: ParameterStore<F>,
    pub metadata: BTreeMap<String, String>,
}

pub fn write_checkpoint<F: Scalar, W: Write>(
    mut w: W,
    config: &TransformerConfig,
    store: &ParameterStore<F>,
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let header = Header {
        dtype: F::NAME.to_string(),
        step: store.step(),
        model: config.clone(),
        metadata: metadata.clone(),
    };
    let text = toml::to_string(&header).map_err(|e| NnError::Format(e.to_string()))?;
    let mut buf = Vec::with_capacity(store.num_elements() * F::BYTES + text.len() + 64);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.extend_from_slice(&(p.tensor.shape().len() as u32).to_le_bytes());
        for &dim in p.tensor.shape() {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &x in p.tensor.data() {
            x.write_le(&mut buf);
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(NnError::Format("unexpected end of checkpoint".into()));
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn read_checkpoint<F: Scalar, R: Read>(mut r: R) -> Result<Checkpoint<F>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        at: 0,
    };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(NnError::Format("missing CEDC-CKPT-1 magic".into()));
    }
    let header_len = c.u64()? as usize;
    let text =
        std::str::from_utf8(c.take(header_len)?).map_err(|e| NnError::Format(e.to_string()))?;
    let header: Header = toml::from_str(text).map_err(|e| NnError::Format(e.to_string()))?;
    if header.dtype != F::NAME {
        return Err(NnError::Format(format!(
            "checkpoint holds {} weights, reader expects {}",
            header.dtype,
            F::NAME
        )));
    }
    let count = c.u32()? as usize;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|e| NnError::Format(e.to_string()))?
            .to_string();
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let payload = c.take(numel * F::BYTES)?;
        let data = payload.chunks_exact(F::BYTES).map(F::read_le).collect();
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    if c.at != bytes.len() {
        return Err(NnError::Format(format!(
            "{} trailing bytes",
            bytes.len() - c.at
        )));
    }
    store.step = header.step;
    Ok(Checkpoint {
        config: header.model,
        store,
        metadata: header.metadata,
    })
}
