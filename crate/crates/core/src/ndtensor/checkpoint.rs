//! Binary parameter checkpoints.
//!
//! Layout: the magic line `BISETCKPT1\n`, then for every parameter in
//! lexicographic name order: name length (u64 LE), UTF-8 name bytes, rank
//! (u64 LE), each dimension (u64 LE), and the values as IEEE-754 `f64` LE.
//! The file ends after the last parameter.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"BISETCKPT1\n";

pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    for (name, tensor) in store.iter() {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.shape().len() as u64).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in tensor.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<ParamStore, String> {
    if !bytes.starts_with(CHECKPOINT_MAGIC) {
        return Err("bad magic".into());
    }
    let mut r = Reader { bytes, pos: CHECKPOINT_MAGIC.len() };
    let mut store = ParamStore::new();
    while !r.done() {
        let len = r.u64()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|e| e.to_string())?;
        let rank = r.u64()? as usize;
        if rank > 8 {
            return Err(format!("implausible rank {rank} for '{name}'"));
        }
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let count: usize = shape.iter().product();
        let raw = r.take(count.checked_mul(8).ok_or("size overflow")?)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let tensor = Tensor::new(shape, values).map_err(|e| e.to_string())?;
        store.insert(name, tensor);
    }
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_checkpoint(store))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes).map_err(|message| Error::Format { path: path.to_path_buf(), message })
}
