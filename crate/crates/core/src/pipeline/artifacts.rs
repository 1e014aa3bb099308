use std::fs;
use std::path::{Path, PathBuf};

use super::config::{biset_fields, rerank_fields, set_biset, set_rerank};
use crate::biset::{Biset, BisetConfig};
use crate::error::{Error, Result};
use crate::ndtensor::{load_checkpoint, save_checkpoint};
use crate::rerank::{RerankConfig, Reranker};
use crate::vocab::Vocab;

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

pub fn vocab_path(checkpoint: &Path) -> PathBuf {
    sidecar(checkpoint, "vocab")
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    sidecar(checkpoint, "meta")
}

fn write_meta(path: &Path, kind: &str, fields: Vec<(&'static str, String)>) -> Result<()> {
    let mut text = format!("model={kind}\n");
    for (k, v) in fields {
        text.push_str(&format!("{k}={v}\n"));
    }
    fs::write(meta_path(path), text)?;
    Ok(())
}

fn read_meta(path: &Path, kind: &str, mut set: impl FnMut(&str, &str) -> Result<bool>) -> Result<()> {
    let meta = meta_path(path);
    let lines = super::corpus::read_lines(&meta)?;
    let bad = |message: String| Error::Format { path: meta.clone(), message };
    for line in lines.iter().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key=value, got '{line}'")))?;
        if k == "model" {
            if v != kind {
                return Err(bad(format!("holds a {v} model, expected {kind}")));
            }
        } else if !set(k, v)? {
            return Err(bad(format!("unknown key '{k}'")));
        }
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

pub fn save_reranker(model: &Reranker, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    save_checkpoint(&model.params, path)?;
    model.vocab.save(&vocab_path(path))?;
    write_meta(path, "rerank", rerank_fields(&model.config))
}

pub fn load_reranker(path: &Path) -> Result<Reranker> {
    let params = load_checkpoint(path)?;
    let vocab = Vocab::load(&vocab_path(path))?;
    let mut config = RerankConfig::default();
    read_meta(path, "rerank", |k, v| set_rerank(&mut config, k, v))?;
    let mut model = Reranker::from_params(vocab, params, config.dropout)?;
    // not recoverable from shapes
    model.config.init_scale = config.init_scale;
    if model.config != config {
        return Err(Error::Data(format!("{} does not match its configuration sidecar", path.display())));
    }
    Ok(model)
}

pub fn save_biset(model: &Biset, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    save_checkpoint(&model.params, path)?;
    model.vocab.save(&vocab_path(path))?;
    write_meta(path, "biset", biset_fields(&model.config))
}

pub fn load_biset(path: &Path) -> Result<Biset> {
    let params = load_checkpoint(path)?;
    let vocab = Vocab::load(&vocab_path(path))?;
    let mut config = BisetConfig::default();
    read_meta(path, "biset", |k, v| set_biset(&mut config, k, v))?;
    config.validate()?;
    Biset::from_params(config, vocab, params)
}
