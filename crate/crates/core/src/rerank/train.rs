use rayon::prelude::*;

use super::model::{pair_logit, RerankConfig, Reranker};
use crate::error::{Error, Result};
use crate::metrics::rouge_n;
use crate::ndtensor::{fit, Dropout, LrSchedule, ParamStore, Tape, TrainConfig, TrainLog};
use crate::retrieval::{normalize, retrieve_tokens, ArticleSummaryPair, InvertedIndex};
use crate::vocab::Vocab;

/// One (article, candidate template, soft target) training example.
#[derive(Clone, Debug, PartialEq)]
pub struct RerankExample {
    pub article_id: usize,
    pub candidate_id: usize,
    pub article: Vec<String>,
    pub candidate: Vec<String>,
    /// ROUGE-1 F1 of the candidate against the article's gold summary.
    pub target: f64,
}

/// Batch 64, lr 0.001 divided by ten every 10K steps, L2 decay 3e-6.
pub fn default_train_config() -> TrainConfig {
    TrainConfig {
        steps: 30_000,
        batch_size: 64,
        schedule: LrSchedule { base: 0.001, decay_start: 10_000, decay_every: 10_000, factor: 0.1 },
        weight_decay: 3e-6,
        seed: 0,
        grad_clip: 5.0,
        target_loss: None,
        eval_every: 100,
    }
}

fn check_targets(dataset: &[RerankExample]) -> Result<()> {
    for ex in dataset {
        if !(0.0..=1.0).contains(&ex.target) {
            return Err(Error::Data(format!(
                "rerank target {} for article {} / candidate {} outside [0, 1]",
                ex.target, ex.article_id, ex.candidate_id
            )));
        }
        if ex.article.is_empty() || ex.candidate.is_empty() {
            return Err(Error::Data(format!(
                "empty article or candidate for article {} / candidate {}",
                ex.article_id, ex.candidate_id
            )));
        }
    }
    Ok(())
}

struct Encoded {
    article: Vec<usize>,
    candidate: Vec<usize>,
    target: f64,
}

fn encode_all(vocab: &Vocab, dataset: &[RerankExample]) -> Vec<Encoded> {
    dataset
        .iter()
        .map(|ex| Encoded { article: vocab.encode(&ex.article), candidate: vocab.encode(&ex.candidate), target: ex.target })
        .collect()
}

fn eval_loss(params: &ParamStore, config: &RerankConfig, data: &[Encoded]) -> Result<f64> {
    let losses: Vec<f64> = data
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let logit = pair_logit(&mut tape, params, config, &ex.article, &ex.candidate, &mut Dropout::eval())?;
            let loss = tape.bce_with_logits(logit, ex.target)?;
            Ok(tape.scalar_value(loss))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Mean binary cross-entropy of the model (evaluation mode) over a dataset.
pub fn dataset_loss(model: &Reranker, dataset: &[RerankExample]) -> Result<f64> {
    check_targets(dataset)?;
    eval_loss(&model.params, &model.config, &encode_all(&model.vocab, dataset))
}

/// Minimizes mean BCE between predicted relevance and the soft targets.
/// The log's evaluation losses are full-dataset, evaluation-mode BCE.
pub fn train_rerank(model: &mut Reranker, dataset: &[RerankExample], cfg: &TrainConfig) -> Result<TrainLog> {
    check_targets(dataset)?;
    let data = encode_all(&model.vocab, dataset);
    let config = model.config.clone();
    fit(
        &mut model.params,
        &data,
        cfg,
        |tape, params, seed, ex| {
            let mut dropout = Dropout::train(config.dropout, seed);
            let logit = pair_logit(tape, params, &config, &ex.article, &ex.candidate, &mut dropout)?;
            tape.bce_with_logits(logit, ex.target)
        },
        |params| eval_loss(params, &config, &data),
    )
}

/// Builds the rerank training set: every article is paired with each of its
/// top-`n` retrieved candidates (itself excluded), labelled by the
/// candidate's ROUGE-1 F1 against the article's gold summary.
pub fn build_rerank_dataset(
    corpus: &[ArticleSummaryPair],
    index: &InvertedIndex,
    n: usize,
) -> Result<Vec<RerankExample>> {
    let mut out = Vec::new();
    for pair in corpus {
        let query = normalize(&pair.article_text());
        let retrieval = retrieve_tokens(index, &query, n, Some(pair.id))?;
        for r in retrieval.results {
            if r.template.is_empty() {
                continue;
            }
            out.push(RerankExample {
                article_id: pair.id,
                candidate_id: r.id,
                article: pair.article.clone(),
                target: rouge_n(&r.template, &pair.summary, 1).f1,
                candidate: r.template,
            });
        }
    }
    Ok(out)
}
