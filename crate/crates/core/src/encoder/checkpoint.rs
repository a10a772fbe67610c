//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"CRENCPT\0"
//! version u32      currently 1
//! config  u64 length + that many bytes of EncoderConfig JSON
//! count   u32      number of tensors
//! tensor  u32 name length + name bytes (UTF-8)
//!         u32 ndim + ndim x u64 dims
//!         prod(dims) x f64 values
//! ```
//!
//! Tensors are written in the fixed order of
//! [`EncoderParams::named_tensors`]; the loader accepts any order but
//! rejects unknown names and missing tensors (except `proj.*`, which a
//! stripped pre-training checkpoint legitimately omits — they load as
//! zeros). A `.json` sidecar with the same stem carries the config for
//! humans and other tooling.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::util::write_atomic;

const MAGIC: &[u8; 8] = b"CRENCPT\0";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialize parameters to the container format. With `include_projection`
/// false the projection head tensors are stripped (the checkpoint shape
/// used after contrastive pre-training).
pub fn checkpoint_bytes(params: &EncoderParams, include_projection: bool) -> Result<Vec<u8>> {
    params.assert_finite()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let config_json = serde_json::to_vec(&params.config)?;
    put_u64(&mut out, config_json.len() as u64);
    out.extend_from_slice(&config_json);

    let tensors: Vec<_> = params
        .named_tensors()
        .into_iter()
        .filter(|(name, _, _)| include_projection || !name.starts_with("proj."))
        .collect();
    put_u32(&mut out, tensors.len() as u32);
    for (name, shape, data) in tensors {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, shape.len() as u32);
        for dim in &shape {
            put_u64(&mut out, *dim as u64);
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Write the checkpoint atomically.
pub fn save_checkpoint(params: &EncoderParams, path: &Path, include_projection: bool) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(params, include_projection)?)
}

/// Write the JSON config sidecar next to a checkpoint path.
pub fn write_config_sidecar(config: &EncoderConfig, ckpt_path: &Path) -> Result<()> {
    let sidecar = ckpt_path.with_extension("json");
    write_atomic(&sidecar, &serde_json::to_vec_pretty(config)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Data("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse checkpoint bytes back into parameters.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<EncoderParams> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Data("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let config_len = r.u64()? as usize;
    let config: EncoderConfig = serde_json::from_slice(r.take(config_len)?)?;
    config.validate()?;

    let count = r.u32()? as usize;
    let mut found: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Data("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = r.take(len * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if found.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::Data(format!("duplicate tensor {name:?}")));
        }
    }

    let mut params = EncoderParams::zeros(&config)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    let known: HashMap<&str, &Vec<usize>> =
        expected.iter().map(|(n, s)| (n.as_str(), s)).collect();
    for name in found.keys() {
        if !known.contains_key(name.as_str()) {
            return Err(Error::Data(format!("unknown tensor {name:?} in checkpoint")));
        }
    }
    for (name, data) in params.flat_tensors_mut() {
        match found.get(&name) {
            Some((shape, values)) => {
                let want = known[name.as_str()];
                if shape != want {
                    return Err(Error::Data(format!(
                        "tensor {name:?} has shape {shape:?}, expected {want:?}"
                    )));
                }
                data.copy_from_slice(values);
            }
            None if name.starts_with("proj.") => {} // stripped head loads as zeros
            None => {
                return Err(Error::Data(format!("tensor {name:?} missing from checkpoint")));
            }
        }
    }
    Ok(params)
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    checkpoint_from_bytes(&bytes)
}
