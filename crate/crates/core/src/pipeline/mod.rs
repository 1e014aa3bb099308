//! Corpus ingestion, configuration, template selection and the end-to-end
//! retrieve, rerank and summarize runs behind the CLI.

mod artifacts;
mod config;
mod corpus;
mod report;
mod run;
pub mod synthetic;
mod templates;

pub use artifacts::{load_biset, load_reranker, meta_path, save_biset, save_reranker, vocab_path};
pub use config::{Paths, PipelineConfig, Profile, TemplateMode};
pub use corpus::{format_lines, load_articles, load_corpus, tokenize, Corpus};
pub use report::{Report, RunMeta};
pub use run::{
    ablation_variants, biset_examples, build_vocab, interaction_variants, run_ablation, run_full_pipeline,
    run_interaction_comparison, run_template_quality_sweep, train_reranker, train_summarizer, Experiment, Pipeline,
    Summarized,
};
pub use templates::{make_templates, TemplateChoice, TemplateSource};
