//! ROUGE-N, ROUGE-L and corpus-level report tables.
//!
//! Scores are computed on plain tokens: no stemming and no stopword removal.
//! [`rouge_w`] offers the weighted-LCS variant for comparison with reports
//! produced by the reference Perl scorer's `-w 1.2` option.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        RougeScore { precision, recall, f1 }
    }

    fn from_overlap(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |total: usize| if total == 0 { 0.0 } else { overlap as f64 / total as f64 };
        RougeScore::from_pr(ratio(candidate_total), ratio(reference_total))
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap. Sequences shorter than `n` score zero.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    if n == 0 {
        return RougeScore::default();
    }
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let overlap: usize = cand.iter().map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0))).sum();
    let total = |len: usize| if len >= n { len - n + 1 } else { 0 };
    RougeScore::from_overlap(overlap, total(candidate.len()), total(reference.len()))
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_overlap(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Weighted LCS with weighting `f(k) = k^weight`, which rewards consecutive
/// matches.
pub fn rouge_w<T: Eq>(candidate: &[T], reference: &[T], weight: f64) -> RougeScore {
    let (m, n) = (candidate.len(), reference.len());
    if m == 0 || n == 0 {
        return RougeScore::default();
    }
    let f = |k: f64| k.powf(weight);
    let f_inv = |x: f64| x.powf(1.0 / weight);
    let mut c = vec![vec![0.0f64; n + 1]; m + 1];
    let mut w = vec![vec![0usize; n + 1]; m + 1];
    for i in 1..=m {
        for j in 1..=n {
            if candidate[i - 1] == reference[j - 1] {
                let k = w[i - 1][j - 1];
                c[i][j] = c[i - 1][j - 1] + f((k + 1) as f64) - f(k as f64);
                w[i][j] = k + 1;
            } else if c[i - 1][j] > c[i][j - 1] {
                c[i][j] = c[i - 1][j];
            } else {
                c[i][j] = c[i][j - 1];
            }
        }
    }
    let wlcs = c[m][n];
    RougeScore::from_pr(f_inv(wlcs / f(m as f64)), f_inv(wlcs / f(n as f64)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LcsMode {
    #[default]
    Plain,
    /// Weighted LCS with weight 1.2.
    Weighted,
}

/// Mean per-pair F1 scores on a 0..1 scale.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CorpusRouge {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

impl CorpusRouge {
    pub fn percent(&self) -> [f64; 3] {
        [self.rouge1 * 100.0, self.rouge2 * 100.0, self.rouge_l * 100.0]
    }
}

pub fn corpus_rouge<S: AsRef<[T]>, T: Eq + Hash>(
    candidates: &[S],
    references: &[S],
    lcs: LcsMode,
) -> Result<CorpusRouge> {
    if candidates.len() != references.len() {
        return Err(Error::Usage(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Ok(CorpusRouge::default());
    }
    let mut total = CorpusRouge::default();
    for (c, r) in candidates.iter().zip(references) {
        let (c, r) = (c.as_ref(), r.as_ref());
        total.rouge1 += rouge_n(c, r, 1).f1;
        total.rouge2 += rouge_n(c, r, 2).f1;
        total.rouge_l += match lcs {
            LcsMode::Plain => rouge_l(c, r).f1,
            LcsMode::Weighted => rouge_w(c, r, 1.2).f1,
        };
    }
    let n = candidates.len() as f64;
    Ok(CorpusRouge { rouge1: total.rouge1 / n, rouge2: total.rouge2 / n, rouge_l: total.rouge_l / n })
}

/// A ROUGE table: one named row per system, percent scale, 2 decimals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RougeTable {
    pub title: String,
    pub rows: Vec<(String, CorpusRouge)>,
}

impl RougeTable {
    pub fn new(title: impl Into<String>) -> Self {
        RougeTable { title: title.into(), rows: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, scores: CorpusRouge) {
        self.rows.push((name.into(), scores));
    }

    /// `row=<name> rouge1=.. rouge2=.. rougeL=..` records.
    pub fn records(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|(name, s)| {
                let [r1, r2, rl] = s.percent();
                format!("row={} rouge1={r1:.2} rouge2={r2:.2} rougeL={rl:.2}", name.replace(' ', "_"))
            })
            .collect()
    }
}

impl fmt::Display for RougeTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|(n, _)| n.len()).chain([self.title.len()]).max().unwrap_or(0);
        writeln!(f, "{:<width$} | ROUGE-1 ROUGE-2 ROUGE-L", self.title)?;
        for (name, s) in &self.rows {
            let [r1, r2, rl] = s.percent();
            writeln!(f, "{name:<width$} | {r1:>7.2} {r2:>7.2} {rl:>7.2}")?;
        }
        Ok(())
    }
}

/// Averages per-pair F1 over aligned lists and renders a one-row table.
pub fn corpus_report<S: AsRef<[T]>, T: Eq + Hash>(
    name: &str,
    candidates: &[S],
    references: &[S],
    lcs: LcsMode,
) -> Result<RougeTable> {
    let scores = corpus_rouge(candidates, references, lcs)?;
    let mut table = RougeTable::new("Model");
    table.push(name, scores);
    Ok(table)
}
