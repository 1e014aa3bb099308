//! Index file layout (all integers u64 little-endian, strings are a byte
//! length followed by UTF-8 bytes):
//!
//! ```text
//! "BISETIDX1\n"
//! doc_count
//! doc_count x { id, doc_length, summary_len, summary_len x string }
//! term_count
//! term_count x { term string, posting_count, posting_count x { doc, tf } }
//! ```
//!
//! Terms are written in lexicographic order and postings in ascending doc
//! order, so saving a loaded index reproduces the original bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{InvertedIndex, Posting};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8] = b"BISETIDX1\n";

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_index(index: &InvertedIndex) -> Vec<u8> {
    let mut out = INDEX_MAGIC.to_vec();
    put_u64(&mut out, index.doc_count());
    for d in 0..index.doc_count() {
        put_u64(&mut out, index.doc_ids[d]);
        put_u64(&mut out, index.doc_lengths[d]);
        put_u64(&mut out, index.summaries[d].len());
        for tok in &index.summaries[d] {
            put_str(&mut out, tok);
        }
    }
    put_u64(&mut out, index.postings.len());
    for (term, postings) in &index.postings {
        put_str(&mut out, term);
        put_u64(&mut out, postings.len());
        for p in postings {
            put_u64(&mut out, p.doc);
            put_u64(&mut out, p.tf);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u64(&mut self) -> std::result::Result<usize, String> {
        let end = self.pos + 8;
        let raw = self.bytes.get(self.pos..end).ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos = end;
        Ok(u64::from_le_bytes(raw.try_into().unwrap()) as usize)
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let len = self.u64()?;
        let end = self.pos.checked_add(len).ok_or("length overflow")?;
        let raw = self.bytes.get(self.pos..end).ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos = end;
        String::from_utf8(raw.to_vec()).map_err(|e| e.to_string())
    }
}

pub fn decode_index(bytes: &[u8]) -> std::result::Result<InvertedIndex, String> {
    if !bytes.starts_with(INDEX_MAGIC) {
        return Err("bad magic".into());
    }
    let mut c = Cursor { bytes, pos: INDEX_MAGIC.len() };
    let docs = c.u64()?;
    let mut doc_ids = Vec::new();
    let mut doc_lengths = Vec::new();
    let mut summaries = Vec::new();
    for _ in 0..docs {
        doc_ids.push(c.u64()?);
        doc_lengths.push(c.u64()?);
        let n = c.u64()?;
        summaries.push((0..n).map(|_| c.string()).collect::<std::result::Result<Vec<_>, _>>()?);
    }
    let terms = c.u64()?;
    let mut postings = BTreeMap::new();
    for _ in 0..terms {
        let term = c.string()?;
        let n = c.u64()?;
        let mut list = Vec::new();
        for _ in 0..n {
            let doc = c.u64()?;
            let tf = c.u64()?;
            if doc >= docs {
                return Err(format!("posting for '{term}' points at doc {doc} of {docs}"));
            }
            list.push(Posting { doc, tf });
        }
        postings.insert(term, list);
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok(InvertedIndex::from_parts(doc_ids, doc_lengths, summaries, postings))
}

pub fn save_index(index: &InvertedIndex, path: &Path) -> Result<()> {
    fs::write(path, encode_index(index))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<InvertedIndex> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    decode_index(&bytes).map_err(|message| Error::Format { path: path.to_path_buf(), message })
}
