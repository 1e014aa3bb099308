use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TemplateMode;
use crate::error::{Error, Result};
use crate::metrics::rouge_n;
use crate::ndtensor::derive_seed;
use crate::rerank::Reranker;
use crate::retrieval::{normalize, retrieve_tokens, ArticleSummaryPair, InvertedIndex, QueryStatus};

/// What template selection may draw on.
#[derive(Clone, Copy)]
pub struct TemplateSource<'a> {
    pub index: &'a InvertedIndex,
    pub reranker: Option<&'a Reranker>,
    /// Candidates retrieved for [`TemplateMode::Reranked`].
    pub n: usize,
    /// Seed for [`TemplateMode::Random`] and the empty-query fallback.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateChoice {
    pub query_id: usize,
    /// Id of the training pair whose summary is the template.
    pub template_id: usize,
    pub template: Vec<String>,
    /// Zero-based retrieval rank of the chosen candidate.
    pub rank: Option<usize>,
    /// Reranker score or ROUGE-1 F1, depending on the mode.
    pub score: Option<f64>,
    /// True when retrieval found nothing and a random template was used.
    pub fallback: bool,
}

fn random_choice(src: &TemplateSource, query: &ArticleSummaryPair, exclude_self: bool, fallback: bool) -> TemplateChoice {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(src.seed, &[query.id as u64]));
    let docs = src.index.doc_count();
    let mut d = rng.gen_range(0..docs);
    while exclude_self && docs > 1 && src.index.doc_ids()[d] == query.id {
        d = rng.gen_range(0..docs);
    }
    TemplateChoice {
        query_id: query.id,
        template_id: src.index.doc_ids()[d],
        template: src.index.summary(d).to_vec(),
        rank: None,
        score: None,
        fallback,
    }
}

fn choose(
    src: &TemplateSource,
    query: &ArticleSummaryPair,
    mode: TemplateMode,
    exclude_self: bool,
) -> Result<TemplateChoice> {
    if mode == TemplateMode::Random {
        return Ok(random_choice(src, query, exclude_self, false));
    }
    let n = match mode {
        TemplateMode::RetrieveTop => 1,
        TemplateMode::NOptimal(n) => n,
        _ => src.n,
    };
    let retrieval = retrieve_tokens(src.index, &normalize(&query.article_text()), n, exclude_self.then_some(query.id))?;
    if retrieval.status == QueryStatus::EmptyQuery || retrieval.results.is_empty() {
        log::warn!("no candidates for article {}; using a random template", query.id);
        return Ok(random_choice(src, query, exclude_self, true));
    }
    let results = retrieval.results;
    let (rank, score) = match mode {
        TemplateMode::RetrieveTop => (0, None),
        TemplateMode::NOptimal(_) => {
            let mut best = (0, f64::NEG_INFINITY);
            for (r, c) in results.iter().enumerate() {
                let f1 = rouge_n(&c.template, &query.summary, 1).f1;
                if f1 > best.1 {
                    best = (r, f1);
                }
            }
            (best.0, Some(best.1))
        }
        TemplateMode::Reranked => {
            let reranker =
                src.reranker.ok_or_else(|| Error::Usage("reranked templates need a trained reranker".into()))?;
            let candidates: Vec<Vec<String>> = results.iter().map(|r| r.template.clone()).collect();
            let (best, s) = reranker.best_template(&query.article, &candidates)?;
            (best, Some(s))
        }
        TemplateMode::Random => unreachable!(),
    };
    let r = &results[rank];
    Ok(TemplateChoice {
        query_id: query.id,
        template_id: r.id,
        template: r.template.clone(),
        rank: Some(rank),
        score,
        fallback: false,
    })
}

/// One template per query, in query order. With `exclude_self` a query
/// never receives its own summary (for queries drawn from the index).
pub fn make_templates(
    src: &TemplateSource,
    queries: &[ArticleSummaryPair],
    mode: TemplateMode,
    exclude_self: bool,
) -> Result<Vec<TemplateChoice>> {
    if mode.needs_gold() {
        if let Some(q) = queries.iter().find(|q| q.summary.is_empty()) {
            return Err(Error::Usage(format!("{mode} templates need gold summaries; article {} has none", q.id)));
        }
    }
    if mode == TemplateMode::Reranked && src.reranker.is_none() {
        return Err(Error::Usage("reranked templates need a trained reranker".into()));
    }
    queries.par_iter().map(|q| choose(src, q, mode, exclude_self)).collect()
}
