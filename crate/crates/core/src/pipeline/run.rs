use rayon::prelude::*;

use super::artifacts::{load_biset, load_reranker};
use super::config::{PipelineConfig, TemplateMode};
use super::report::{Report, RunMeta};
use super::templates::{make_templates, TemplateChoice, TemplateSource};
use crate::biset::{train_biset, Biset, BisetConfig, BisetExample};
use crate::error::Result;
use crate::metrics::{corpus_rouge, RougeTable};
use crate::ndtensor::{derive_seed, TrainLog};
use crate::rerank::{build_rerank_dataset, train_rerank, Reranker};
use crate::retrieval::{build_index, load_index, ArticleSummaryPair, InvertedIndex};
use crate::vocab::Vocab;

/// Vocabulary over every article and summary token of a corpus.
pub fn build_vocab(pairs: &[ArticleSummaryPair], min_count: usize) -> Vocab {
    Vocab::build(pairs.iter().flat_map(|p| [&p.article, &p.summary]), min_count)
}

/// Builds the rerank training set from `train` and fits a fresh reranker.
pub fn train_reranker(
    cfg: &PipelineConfig,
    train: &[ArticleSummaryPair],
    index: &InvertedIndex,
    vocab: Vocab,
) -> Result<(Reranker, TrainLog)> {
    let dataset = build_rerank_dataset(train, index, cfg.retrieval_n)?;
    let mut model = Reranker::new(cfg.rerank.clone(), vocab, derive_seed(cfg.seed, &[3]))?;
    let log = train_rerank(&mut model, &dataset, &cfg.rerank_train_config())?;
    Ok((model, log))
}

pub fn biset_examples(pairs: &[ArticleSummaryPair], templates: &[TemplateChoice]) -> Vec<BisetExample> {
    pairs
        .iter()
        .zip(templates)
        .map(|(p, t)| BisetExample { article: p.article.clone(), template: t.template.clone(), summary: p.summary.clone() })
        .collect()
}

pub fn train_summarizer(
    cfg: &PipelineConfig,
    model_cfg: &BisetConfig,
    vocab: Vocab,
    examples: &[BisetExample],
) -> Result<(Biset, TrainLog)> {
    let mut model = Biset::new(model_cfg.clone(), vocab, derive_seed(cfg.seed, &[4]))?;
    let log = train_biset(&mut model, examples, &cfg.biset_train_config())?;
    Ok((model, log))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summarized {
    pub template: TemplateChoice,
    pub summary: Vec<String>,
}

/// Index, reranker and summarizer loaded together.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub index: InvertedIndex,
    pub reranker: Option<Reranker>,
    pub biset: Biset,
}

impl Pipeline {
    /// Loads every artifact the configured template mode needs. A missing
    /// file fails with an error naming it.
    pub fn load(config: PipelineConfig) -> Result<Self> {
        let index = load_index(&config.paths.index)?;
        let reranker = match config.template_mode {
            TemplateMode::Reranked => Some(load_reranker(&config.paths.rerank_checkpoint)?),
            _ => None,
        };
        let biset = load_biset(&config.paths.biset_checkpoint)?;
        Ok(Pipeline { config, index, reranker, biset })
    }

    pub fn source(&self) -> TemplateSource<'_> {
        TemplateSource { index: &self.index, reranker: self.reranker.as_ref(), n: self.config.retrieval_n, seed: self.config.seed }
    }

    /// Templates for each query, then one beam decode per query. Results are
    /// in query order.
    pub fn summarize_all(&self, queries: &[ArticleSummaryPair]) -> Result<Vec<Summarized>> {
        let templates = make_templates(&self.source(), queries, self.config.template_mode, false)?;
        queries
            .par_iter()
            .zip(templates)
            .map(|(q, template)| {
                let summary = if q.article.is_empty() {
                    Vec::new()
                } else {
                    self.biset.summarize(&q.article, &template.template, self.config.beam)?
                };
                log::debug!(
                    "article {} template {} rank {:?} score {:?} summary '{}'",
                    q.id,
                    template.template_id,
                    template.rank,
                    template.score,
                    summary.join(" ")
                );
                Ok(Summarized { template, summary })
            })
            .collect()
    }

    /// ROUGE of generated summaries against the gold ones.
    pub fn evaluate(&self, test: &[ArticleSummaryPair]) -> Result<Report> {
        let outputs = self.summarize_all(test)?;
        let candidates: Vec<&[String]> = outputs.iter().map(|o| o.summary.as_slice()).collect();
        let references: Vec<&[String]> = test.iter().map(|p| p.summary.as_slice()).collect();
        let mut table = RougeTable::new("Model");
        table.push(self.biset.config.interaction.to_string(), corpus_rouge(&candidates, &references, self.config.lcs)?);
        let mut report = Report::new(table, RunMeta::new(&self.config));
        report.note("pairs", test.len());
        report.note("fallbacks", outputs.iter().filter(|o| o.template.fallback).count());
        Ok(report)
    }
}

/// Retrieve, rerank and decode one article.
pub fn run_full_pipeline(pipeline: &Pipeline, article: &ArticleSummaryPair) -> Result<Summarized> {
    Ok(pipeline.summarize_all(std::slice::from_ref(article))?.remove(0))
}

/// Template-vs-gold ROUGE for Random, Retrieve-top, N-Optimal at each `N`
/// and, when a reranker is given, the reranked choice.
pub fn run_template_quality_sweep(
    cfg: &PipelineConfig,
    src: &TemplateSource,
    queries: &[ArticleSummaryPair],
    ns: &[usize],
    exclude_self: bool,
) -> Result<Report> {
    let mut modes = vec![("Random".to_string(), TemplateMode::Random), ("Retrieve-top".to_string(), TemplateMode::RetrieveTop)];
    modes.extend(ns.iter().map(|&n| (format!("N-Optimal({n})"), TemplateMode::NOptimal(n))));
    if src.reranker.is_some() {
        modes.push((format!("Reranked({})", src.n), TemplateMode::Reranked));
    }
    let references: Vec<&[String]> = queries.iter().map(|p| p.summary.as_slice()).collect();
    let mut table = RougeTable::new("Template");
    for (name, mode) in modes {
        let chosen = make_templates(src, queries, mode, exclude_self)?;
        let candidates: Vec<&[String]> = chosen.iter().map(|c| c.template.as_slice()).collect();
        table.push(name, corpus_rouge(&candidates, &references, cfg.lcs)?);
    }
    let mut report = Report::new(table, RunMeta::new(cfg));
    report.note("queries", queries.len());
    Ok(report)
}

/// Shared inputs for comparing summarizer variants: every variant trains on
/// the same examples with the same seed.
pub struct Experiment {
    pub index: InvertedIndex,
    pub vocab: Vocab,
    pub reranker: Option<Reranker>,
    pub train_examples: Vec<BisetExample>,
    pub test_examples: Vec<BisetExample>,
    pub meta: RunMeta,
}

impl Experiment {
    pub fn prepare(cfg: &PipelineConfig, train: &[ArticleSummaryPair], test: &[ArticleSummaryPair]) -> Result<Self> {
        let index = build_index(train)?;
        let vocab = build_vocab(train, cfg.vocab_min_count);
        let mut meta = RunMeta::new(cfg);
        let reranker = if cfg.template_mode == TemplateMode::Reranked {
            let (model, log) = train_reranker(cfg, train, &index, vocab.clone())?;
            meta.steps.push(("rerank".into(), log.steps));
            Some(model)
        } else {
            None
        };
        let src = TemplateSource { index: &index, reranker: reranker.as_ref(), n: cfg.retrieval_n, seed: cfg.seed };
        let train_t = make_templates(&src, train, cfg.template_mode, true)?;
        let test_t = make_templates(&src, test, cfg.template_mode, false)?;
        let train_examples = biset_examples(train, &train_t);
        let test_examples = biset_examples(test, &test_t);
        Ok(Experiment { index, vocab, reranker, train_examples, test_examples, meta })
    }

    /// Trains each named variant and scores its beam decodes on the test
    /// examples. Rows follow `variants`.
    pub fn compare(&self, cfg: &PipelineConfig, title: &str, variants: &[(String, BisetConfig)]) -> Result<Report> {
        let mut table = RougeTable::new(title);
        let mut meta = self.meta.clone();
        let mut report_notes = Vec::new();
        let references: Vec<&[String]> = self.test_examples.iter().map(|e| e.summary.as_slice()).collect();
        for (name, model_cfg) in variants {
            let (model, log) = train_summarizer(cfg, model_cfg, self.vocab.clone(), &self.train_examples)?;
            let outputs: Vec<Vec<String>> = self
                .test_examples
                .par_iter()
                .map(|e| model.summarize(&e.article, &e.template, cfg.beam))
                .collect::<Result<_>>()?;
            let candidates: Vec<&[String]> = outputs.iter().map(Vec::as_slice).collect();
            table.push(name.clone(), corpus_rouge(&candidates, &references, cfg.lcs)?);
            meta.steps.push((name.clone(), log.steps));
            report_notes.push((format!("train_nll.{}", name.replace(' ', "_")), format!("{:.6}", log.final_loss)));
        }
        let mut report = Report::new(table, meta);
        report.notes = report_notes;
        Ok(report)
    }
}

/// The four ablation rows: concatenation, BiSET without T2A, BiSET without
/// A2T and full BiSET, all otherwise configured as `cfg.biset`.
pub fn ablation_variants(base: &BisetConfig) -> Vec<(String, BisetConfig)> {
    use crate::biset::Interaction;
    let full = BisetConfig { interaction: Interaction::Biset, disable_t2a: false, disable_a2t: false, ..base.clone() };
    vec![
        ("Concatenation".into(), BisetConfig { interaction: Interaction::Concat, ..full.clone() }),
        ("BiSET w/o T2A".into(), BisetConfig { disable_t2a: true, ..full.clone() }),
        ("BiSET w/o A2T".into(), BisetConfig { disable_a2t: true, ..full.clone() }),
        ("BiSET".into(), full),
    ]
}

/// BiSET against the three alternative interaction layers.
pub fn interaction_variants(base: &BisetConfig) -> Vec<(String, BisetConfig)> {
    use crate::biset::Interaction;
    let plain = BisetConfig { disable_t2a: false, disable_a2t: false, ..base.clone() };
    [
        ("Concatenation", Interaction::Concat),
        ("Concat + Self-Attention", Interaction::ConcatSelfAttention),
        ("DCN Attention", Interaction::Dcn),
        ("BiSET", Interaction::Biset),
    ]
    .into_iter()
    .map(|(name, interaction)| (name.to_string(), BisetConfig { interaction, ..plain.clone() }))
    .collect()
}

pub fn run_ablation(cfg: &PipelineConfig, train: &[ArticleSummaryPair], test: &[ArticleSummaryPair]) -> Result<Report> {
    Experiment::prepare(cfg, train, test)?.compare(cfg, "Ablation", &ablation_variants(&cfg.biset))
}

pub fn run_interaction_comparison(
    cfg: &PipelineConfig,
    train: &[ArticleSummaryPair],
    test: &[ArticleSummaryPair],
) -> Result<Report> {
    Experiment::prepare(cfg, train, test)?.compare(cfg, "Interaction", &interaction_variants(&cfg.biset))
}
