//! Per-group binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"NKBQ"
//! version u32 (= 1)
//! group   u32 length + UTF-8 tag ("phi", "theta", "psi", "classifier")
//! count   u32
//! count x { path: u32 length + UTF-8, rows: u64, cols: u64, rows*cols f64 }
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::{ParamGroup, ParameterSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NKBQ";
const VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes every parameter of `group`, in insertion order.
pub fn encode_group(params: &ParameterSet, group: ParamGroup) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, group.tag());
    let members: Vec<_> = params.iter().filter(|(_, p)| p.group == group).collect();
    out.extend_from_slice(&(members.len() as u32).to_le_bytes());
    for (_, p) in members {
        put_str(&mut out, &p.path);
        out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("non UTF-8 string".into()))
    }
}

/// Decodes a checkpoint into `(group, [(path, tensor)])`.
pub fn decode_group(bytes: &[u8]) -> Result<(ParamGroup, Vec<(String, Tensor)>)> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let tag = r.string()?;
    let group = ParamGroup::from_tag(&tag).ok_or_else(|| Error::Checkpoint(format!("unknown group `{tag}`")))?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let path = r.string()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.buf.len()))
            .ok_or_else(|| Error::Checkpoint(format!("`{path}` claims more data than present")))?;
        let data = r
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((path, Tensor::from_vec(rows, cols, data)?));
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((group, out))
}

/// Overwrites the matching parameters of `params` with a decoded group.
///
/// Every parameter of the group must be present in the file with the same shape.
pub fn restore_group(params: &mut ParameterSet, bytes: &[u8]) -> Result<ParamGroup> {
    let (group, tensors) = decode_group(bytes)?;
    let expected = params.ids_in(group).len();
    if tensors.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{group} checkpoint holds {} parameters, model has {expected}",
            tensors.len()
        )));
    }
    for (path, t) in tensors {
        let id = params
            .id(&path)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{path}`")))?;
        let dst = params.value_mut(id);
        if dst.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "`{path}` is {:?} in the checkpoint but {:?} in the model",
                t.shape(),
                dst.shape()
            )));
        }
        *dst = t;
    }
    Ok(group)
}

pub fn save_group(params: &ParameterSet, group: ParamGroup, path: &Path) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_group(params, group))?;
    Ok(())
}

pub fn load_group(params: &mut ParameterSet, path: &Path) -> Result<ParamGroup> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    restore_group(params, &bytes)
}
