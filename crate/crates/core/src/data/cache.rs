//! Binary dump of a binned dataset.
//!
//! Layout (little endian):
//!
//! ```text
//! magic      8 bytes  "AIASPIKE"
//! version    u32
//! params     32 bytes SHA-256 of the parameters that produced the data
//! classes    u64
//! batch      u64
//! neurons    u64
//! timesteps  u64
//! labels     batch x u32
//! spikes     ceil(batch*neurons*timesteps / 8) bytes, LSB-first bit packing
//! ```

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{Dataset, SpikeTensor, Split};

pub const CACHE_MAGIC: &[u8; 8] = b"AIASPIKE";
pub const CACHE_VERSION: u32 = 1;

/// SHA-256 of the JSON encoding of `params`.
pub fn binning_hash<P: Serialize>(params: &P) -> Result<[u8; 32]> {
    let bytes = serde_json::to_vec(params)?;
    Ok(Sha256::digest(&bytes).into())
}

pub fn encode_cache(ds: &Dataset, params_hash: &[u8; 32]) -> Vec<u8> {
    let s = &ds.inputs;
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(params_hash);
    for v in [ds.class_count, s.batch(), s.neurons(), s.timesteps()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &l in &ds.labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    let mut packed = vec![0u8; s.data().len().div_ceil(8)];
    for (k, &v) in s.data().iter().enumerate() {
        if v == 1.0 {
            packed[k / 8] |= 1 << (k % 8);
        }
    }
    out.extend_from_slice(&packed);
    out
}

pub fn save_cache(path: &Path, ds: &Dataset, params_hash: &[u8; 32]) -> Result<()> {
    std::fs::write(path, encode_cache(ds, params_hash)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data("dataset cache is truncated".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Data("cache dimension overflows".into()))
    }
}

/// Decodes a cache. With `expected_hash`, a cache built from different
/// parameters is rejected as stale.
pub fn decode_cache(bytes: &[u8], expected_hash: Option<&[u8; 32]>) -> Result<Dataset> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != CACHE_MAGIC {
        return Err(Error::Data("not a dataset cache (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::Data(format!("unsupported cache version {version}")));
    }
    let hash = c.take(32)?;
    if let Some(expected) = expected_hash {
        if hash != expected {
            return Err(Error::State(
                "dataset cache is stale: binning parameters changed".into(),
            ));
        }
    }
    let classes = c.u64()?;
    let batch = c.u64()?;
    let neurons = c.u64()?;
    let timesteps = c.u64()?;
    let labels = (0..batch)
        .map(|_| c.u32().map(|l| l as usize))
        .collect::<Result<Vec<_>>>()?;
    let total = batch
        .checked_mul(neurons)
        .and_then(|v| v.checked_mul(timesteps))
        .ok_or_else(|| Error::Data("cache dimension overflows".into()))?;
    let packed = c.take(total.div_ceil(8))?;
    if c.pos != bytes.len() {
        return Err(Error::Data("trailing bytes after dataset cache".into()));
    }
    let data = (0..total)
        .map(|k| if packed[k / 8] >> (k % 8) & 1 == 1 { 1.0 } else { 0.0 })
        .collect();
    Dataset::new(
        SpikeTensor::new(batch, neurons, timesteps, data)?,
        labels,
        classes,
        Split::All,
    )
}

pub fn load_cache(path: &Path, expected_hash: Option<&[u8; 32]>) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cache(&bytes, expected_hash)
}
