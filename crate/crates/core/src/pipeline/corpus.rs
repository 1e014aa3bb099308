use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::retrieval::ArticleSummaryPair;

/// Pairs loaded from line-aligned article and summary files.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    /// Kept pairs; `id` is the zero-based source line.
    pub pairs: Vec<ArticleSummaryPair>,
    /// Lines dropped because one side was empty.
    pub dropped: usize,
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Lowercased whitespace tokens. Masked digits such as `#.#` stay tokens.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_lowercase).collect()
}

pub fn load_corpus(article_path: &Path, summary_path: &Path) -> Result<Corpus> {
    let articles = read_lines(article_path)?;
    let summaries = read_lines(summary_path)?;
    if articles.len() != summaries.len() {
        return Err(Error::Ingestion(format!(
            "{} has {} lines but {} has {}",
            article_path.display(),
            articles.len(),
            summary_path.display(),
            summaries.len()
        )));
    }
    let mut pairs = Vec::with_capacity(articles.len());
    let mut dropped = 0;
    for (id, (a, s)) in articles.iter().zip(&summaries).enumerate() {
        let pair = ArticleSummaryPair { id, article: tokenize(a), summary: tokenize(s) };
        if pair.article.is_empty() || pair.summary.is_empty() {
            dropped += 1;
        } else {
            pairs.push(pair);
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} pair(s) with an empty side from {}", article_path.display());
    }
    Ok(Corpus { pairs, dropped })
}

/// Unlabelled articles, one per line. Empty lines are kept so outputs stay
/// aligned with the input; their summary is empty.
pub fn load_articles(path: &Path) -> Result<Vec<ArticleSummaryPair>> {
    Ok(read_lines(path)?
        .iter()
        .enumerate()
        .map(|(id, a)| ArticleSummaryPair { id, article: tokenize(a), summary: Vec::new() })
        .collect())
}

/// One whitespace-joined token line per entry, each terminated by `\n`.
pub fn format_lines<S: AsRef<[String]>>(rows: &[S]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&r.as_ref().join(" "));
        out.push('\n');
    }
    out
}
