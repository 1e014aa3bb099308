//! Training-pair manifest: one `article_id<TAB>candidate_id<TAB>target`
//! record per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::RerankExample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifestRecord {
    pub article_id: usize,
    pub candidate_id: usize,
    pub target: f64,
}

impl From<&RerankExample> for ManifestRecord {
    fn from(ex: &RerankExample) -> Self {
        ManifestRecord { article_id: ex.article_id, candidate_id: ex.candidate_id, target: ex.target }
    }
}

pub fn format_manifest(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        // `{}` on f64 prints the shortest string that parses back exactly
        let _ = writeln!(out, "{}\t{}\t{}", r.article_id, r.candidate_id, r.target);
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = |what: &str| Error::Data(format!("manifest line {}: {what}", n + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected 3 tab-separated fields"));
            }
            let article_id = fields[0].trim().parse().map_err(|_| bad("bad article id"))?;
            let candidate_id = fields[1].trim().parse().map_err(|_| bad("bad candidate id"))?;
            let target: f64 = fields[2].trim().parse().map_err(|_| bad("bad target"))?;
            if !(0.0..=1.0).contains(&target) {
                return Err(bad("target outside [0, 1]"));
            }
            Ok(ManifestRecord { article_id, candidate_id, target })
        })
        .collect()
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    fs::write(path, format_manifest(records))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    parse_manifest(&fs::read_to_string(path)?)
}
