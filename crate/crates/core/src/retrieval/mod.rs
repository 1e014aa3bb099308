//! Lexical candidate retrieval.
//!
//! Training articles are indexed after [`normalize`] (lowercase, letters
//! only). A query article is scored against every indexed article with BM25
//! and the summaries of the best matches come back as candidate templates.

mod store;

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub use store::{decode_index, encode_index, load_index, save_index, INDEX_MAGIC};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const DEFAULT_TOP_N: usize = 30;

/// One aligned record of the training corpus, tokenized for the models.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArticleSummaryPair {
    pub id: usize,
    pub article: Vec<String>,
    pub summary: Vec<String>,
}

impl ArticleSummaryPair {
    pub fn new(id: usize, article: &str, summary: &str) -> Self {
        let split = |s: &str| s.split_whitespace().map(str::to_lowercase).collect();
        ArticleSummaryPair { id, article: split(article), summary: split(summary) }
    }

    pub fn article_text(&self) -> String {
        self.article.join(" ")
    }
}

/// Lowercases, drops every character that is not `a-z` or whitespace, and
/// splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_ascii_lowercase() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    /// Position of the document in the index's doc table.
    pub doc: usize,
    pub tf: usize,
}

/// Term -> postings map plus the per-document statistics BM25 needs.
/// Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    pub(crate) postings: BTreeMap<String, Vec<Posting>>,
    pub(crate) doc_ids: Vec<usize>,
    pub(crate) doc_lengths: Vec<usize>,
    pub(crate) summaries: Vec<Vec<String>>,
    pub(crate) avg_doc_length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    pub id: usize,
    pub score: f64,
    pub template: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryStatus {
    Ok,
    /// The query had no alphabetic tokens; nothing was scored.
    EmptyQuery,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Retrieval {
    pub status: QueryStatus,
    pub results: Vec<RetrievalResult>,
}

pub fn build_index(corpus: &[ArticleSummaryPair]) -> Result<InvertedIndex> {
    if corpus.is_empty() {
        return Err(Error::Build("cannot index an empty corpus".into()));
    }
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    for (doc, pair) in corpus.iter().enumerate() {
        let terms = normalize(&pair.article_text());
        doc_lengths.push(terms.len());
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for t in terms {
            *tf.entry(t).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push(Posting { doc, tf: count });
        }
    }
    let total: usize = doc_lengths.iter().sum();
    if total == 0 {
        return Err(Error::Build("every article normalizes to an empty token list".into()));
    }
    Ok(InvertedIndex {
        postings,
        doc_ids: corpus.iter().map(|p| p.id).collect(),
        avg_doc_length: total as f64 / doc_lengths.len() as f64,
        doc_lengths,
        summaries: corpus.iter().map(|p| p.summary.clone()).collect(),
    })
}

impl InvertedIndex {
    pub(crate) fn from_parts(
        doc_ids: Vec<usize>,
        doc_lengths: Vec<usize>,
        summaries: Vec<Vec<String>>,
        postings: BTreeMap<String, Vec<Posting>>,
    ) -> Self {
        let total: usize = doc_lengths.iter().sum();
        let avg_doc_length = if doc_lengths.is_empty() { 0.0 } else { total as f64 / doc_lengths.len() as f64 };
        InvertedIndex { postings, doc_ids, doc_lengths, summaries, avg_doc_length }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    pub fn doc_ids(&self) -> &[usize] {
        &self.doc_ids
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &String> {
        self.postings.keys()
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    /// Summary (template) stored for the document at table position `doc`.
    pub fn summary(&self, doc: usize) -> &[String] {
        &self.summaries[doc]
    }

    /// Table position of an external document id.
    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.doc_ids.binary_search(&id).ok().or_else(|| self.doc_ids.iter().position(|&d| d == id))
    }

    pub fn idf(&self, term: &str) -> f64 {
        bm25_idf(self.doc_count(), self.df(term))
    }

    /// BM25 score of every indexed document for a normalized query.
    pub fn score_all(&self, query: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_count()];
        let mut qtf: HashMap<&str, usize> = HashMap::new();
        for t in query {
            *qtf.entry(t.as_str()).or_insert(0) += 1;
        }
        // accumulate in a fixed term order so scores are bit-reproducible
        let mut terms: Vec<(&str, usize)> = qtf.into_iter().collect();
        terms.sort_unstable();
        for (term, count) in terms {
            let idf = self.idf(term);
            for p in self.postings(term) {
                let tf = p.tf as f64;
                let norm = 1.0 - BM25_B + BM25_B * self.doc_lengths[p.doc] as f64 / self.avg_doc_length;
                scores[p.doc] += count as f64 * idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
            }
        }
        scores
    }
}

pub fn bm25_idf(doc_count: usize, df: usize) -> f64 {
    (1.0 + (doc_count as f64 - df as f64 + 0.5) / (df as f64 + 0.5)).ln()
}

/// Top-`n` documents for a raw query string.
pub fn retrieve(index: &InvertedIndex, article: &str, n: usize) -> Result<Retrieval> {
    retrieve_tokens(index, &normalize(article), n, None)
}

/// Top-`n` documents for an already normalized query, optionally skipping
/// one external document id (used when the query itself is indexed).
pub fn retrieve_tokens(
    index: &InvertedIndex,
    query: &[String],
    n: usize,
    exclude_id: Option<usize>,
) -> Result<Retrieval> {
    if n == 0 {
        return Err(Error::Usage("retrieve: N must be at least 1".into()));
    }
    if query.is_empty() {
        return Ok(Retrieval { status: QueryStatus::EmptyQuery, results: Vec::new() });
    }
    let scores = index.score_all(query);
    let mut order: Vec<usize> = (0..index.doc_count())
        .filter(|&d| Some(index.doc_ids[d]) != exclude_id)
        .collect();
    let cmp = |a: &usize, b: &usize| {
        scores[*b].total_cmp(&scores[*a]).then(index.doc_ids[*a].cmp(&index.doc_ids[*b]))
    };
    if order.len() > n {
        order.select_nth_unstable_by(n - 1, cmp);
        order.truncate(n);
    }
    order.sort_by(cmp);
    let results = order
        .into_iter()
        .map(|d| RetrievalResult { id: index.doc_ids[d], score: scores[d], template: index.summaries[d].clone() })
        .collect();
    Ok(Retrieval { status: QueryStatus::Ok, results })
}
