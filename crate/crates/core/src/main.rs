use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biset_core::biset::Biset;
use biset_core::pipeline::{
    self, biset_examples, build_vocab, format_lines, load_articles, load_corpus, make_templates, tokenize,
    PipelineConfig, Profile, Report, RunMeta, TemplateMode, TemplateSource,
};
use biset_core::retrieval::{self, build_index, load_index, save_index, ArticleSummaryPair};
use biset_core::{Error, Result};

#[derive(Parser)]
#[command(name = "biset", version, about = "Retrieve, rerank and template-guided summarization")]
struct Cli {
    /// key = value settings applied over the profile defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "mini")]
    profile: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Labeled {
    /// One article per line
    #[arg(long)]
    articles: Option<PathBuf>,
    /// One summary per line, aligned with the articles
    #[arg(long)]
    summaries: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Index training articles for retrieval
    BuildIndex {
        #[command(flatten)]
        data: Labeled,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top-N candidate templates per article
    Retrieve {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// One template per article
    MakeTemplates {
        #[command(flatten)]
        data: Labeled,
        /// random, retrieve_top, n_optimal:<N> or reranked
        #[arg(long)]
        mode: Option<String>,
        /// Never pick an article's own summary (articles drawn from the index)
        #[arg(long)]
        exclude_self: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the template reranker
    TrainRerank {
        #[command(flatten)]
        data: Labeled,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the summarizer
    TrainBiset {
        #[command(flatten)]
        data: Labeled,
        /// Templates aligned with the articles; selected per config if absent
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize articles, one summary per output line
    Summarize {
        #[arg(long)]
        articles: PathBuf,
        /// Templates aligned with the articles; retrieved and reranked if absent
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ROUGE of the full pipeline against gold summaries
    Evaluate {
        #[command(flatten)]
        data: Labeled,
    },
    /// Template quality of each selection mode against gold summaries
    SweepTemplates {
        #[command(flatten)]
        data: Labeled,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
        ns: Vec<usize>,
        #[arg(long)]
        exclude_self: bool,
    },
    /// Train and score the ablated summarizers
    Ablate {
        #[arg(long)]
        train_articles: Option<PathBuf>,
        #[arg(long)]
        train_summaries: Option<PathBuf>,
        #[arg(long)]
        test_articles: Option<PathBuf>,
        #[arg(long)]
        test_summaries: Option<PathBuf>,
        /// Compare interaction layers instead of gate ablations
        #[arg(long)]
        interactions: bool,
    },
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| Error::Usage(format!("--{name} is required (or set it in the config)")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn print_report(report: &Report) -> Result<()> {
    let mut text = report.to_string();
    for r in report.records() {
        text.push_str(&r);
        text.push('\n');
    }
    emit(None, &text)
}

fn train_pairs(cfg: &PipelineConfig, data: Labeled) -> Result<Vec<ArticleSummaryPair>> {
    let a = required(data.articles, &cfg.paths.train_articles, "articles")?;
    let s = required(data.summaries, &cfg.paths.train_summaries, "summaries")?;
    Ok(load_corpus(&a, &s)?.pairs)
}

fn test_pairs(cfg: &PipelineConfig, data: Labeled) -> Result<Vec<ArticleSummaryPair>> {
    let a = required(data.articles, &cfg.paths.test_articles, "articles")?;
    let s = required(data.summaries, &cfg.paths.test_summaries, "summaries")?;
    Ok(load_corpus(&a, &s)?.pairs)
}

fn read_templates(path: &Path, expected: usize) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.to_path_buf()))?;
    let templates: Vec<Vec<String>> = text.lines().map(tokenize).collect();
    if templates.len() != expected {
        return Err(Error::Ingestion(format!("{} has {} templates for {expected} articles", path.display(), templates.len())));
    }
    Ok(templates)
}

fn run(cli: Cli) -> Result<()> {
    let profile: Profile = cli.profile.parse()?;
    let mut cfg = PipelineConfig::load(profile, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::BuildIndex { data, out } => {
            let pairs = train_pairs(&cfg, data)?;
            let index = build_index(&pairs)?;
            let out = out.unwrap_or(cfg.paths.index.clone());
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_index(&index, &out)?;
            emit(None, &format!("docs={} terms={} index={}\n", index.doc_count(), index.terms().count(), out.display()))
        }
        Command::Retrieve { articles, n } => {
            let index = load_index(&cfg.paths.index)?;
            let mut text = String::new();
            for q in load_articles(&articles)? {
                let r = retrieval::retrieve(&index, &q.article_text(), n.unwrap_or(cfg.retrieval_n))?;
                for (rank, c) in r.results.iter().enumerate() {
                    text.push_str(&format!(
                        "query={} rank={} id={} score={:.6} template={}\n",
                        q.id,
                        rank + 1,
                        c.id,
                        c.score,
                        c.template.join(" ")
                    ));
                }
            }
            emit(None, &text)
        }
        Command::MakeTemplates { data, mode, exclude_self, out } => {
            let mode: TemplateMode = mode.map_or(Ok(cfg.template_mode), |m| m.parse())?;
            let articles = required(data.articles, &cfg.paths.train_articles, "articles")?;
            let queries = match data.summaries {
                Some(s) => load_corpus(&articles, &s)?.pairs,
                None => load_articles(&articles)?,
            };
            let index = load_index(&cfg.paths.index)?;
            let reranker = match mode {
                TemplateMode::Reranked => Some(pipeline::load_reranker(&cfg.paths.rerank_checkpoint)?),
                _ => None,
            };
            let src = TemplateSource { index: &index, reranker: reranker.as_ref(), n: cfg.retrieval_n, seed: cfg.seed };
            let chosen = make_templates(&src, &queries, mode, exclude_self)?;
            let rows: Vec<&[String]> = chosen.iter().map(|c| c.template.as_slice()).collect();
            emit(out.as_deref(), &format_lines(&rows))
        }
        Command::TrainRerank { data, out } => {
            let pairs = train_pairs(&cfg, data)?;
            let index = build_index(&pairs)?;
            let (model, log) = pipeline::train_reranker(&cfg, &pairs, &index, build_vocab(&pairs, cfg.vocab_min_count))?;
            let out = out.unwrap_or(cfg.paths.rerank_checkpoint.clone());
            pipeline::save_reranker(&model, &out)?;
            let meta = RunMeta::new(&cfg);
            emit(
                None,
                &format!(
                    "config_hash={} seed={} steps={} final_bce={:.6} checkpoint={}\n",
                    meta.config_hash,
                    meta.seed,
                    log.steps,
                    log.final_loss,
                    out.display()
                ),
            )
        }
        Command::TrainBiset { data, templates, out } => {
            let pairs = train_pairs(&cfg, data)?;
            let examples = match templates {
                Some(path) => {
                    let t = read_templates(&path, pairs.len())?;
                    pairs
                        .iter()
                        .zip(t)
                        .map(|(p, template)| biset_core::biset::BisetExample {
                            article: p.article.clone(),
                            template,
                            summary: p.summary.clone(),
                        })
                        .collect()
                }
                None => {
                    let index = build_index(&pairs)?;
                    let reranker = match cfg.template_mode {
                        TemplateMode::Reranked => Some(pipeline::load_reranker(&cfg.paths.rerank_checkpoint)?),
                        _ => None,
                    };
                    let src = TemplateSource { index: &index, reranker: reranker.as_ref(), n: cfg.retrieval_n, seed: cfg.seed };
                    biset_examples(&pairs, &make_templates(&src, &pairs, cfg.template_mode, true)?)
                }
            };
            let (model, log) =
                pipeline::train_summarizer(&cfg, &cfg.biset, build_vocab(&pairs, cfg.vocab_min_count), &examples)?;
            let out = out.unwrap_or(cfg.paths.biset_checkpoint.clone());
            pipeline::save_biset(&model, &out)?;
            let meta = RunMeta::new(&cfg);
            emit(
                None,
                &format!(
                    "config_hash={} seed={} steps={} final_nll={:.6} checkpoint={}\n",
                    meta.config_hash,
                    meta.seed,
                    log.steps,
                    log.final_loss,
                    out.display()
                ),
            )
        }
        Command::Summarize { articles, templates, out } => {
            let queries = load_articles(&articles)?;
            let summaries: Vec<Vec<String>> = match templates {
                Some(path) => {
                    let model: Biset = pipeline::load_biset(&cfg.paths.biset_checkpoint)?;
                    let t = read_templates(&path, queries.len())?;
                    queries
                        .iter()
                        .zip(&t)
                        .map(|(q, t)| {
                            if q.article.is_empty() || t.is_empty() {
                                Ok(Vec::new())
                            } else {
                                model.summarize(&q.article, t, cfg.beam)
                            }
                        })
                        .collect::<Result<_>>()?
                }
                None => pipeline::Pipeline::load(cfg)?.summarize_all(&queries)?.into_iter().map(|s| s.summary).collect(),
            };
            emit(out.as_deref(), &format_lines(&summaries))
        }
        Command::Evaluate { data } => {
            let test = test_pairs(&cfg, data)?;
            print_report(&pipeline::Pipeline::load(cfg)?.evaluate(&test)?)
        }
        Command::SweepTemplates { data, ns, exclude_self } => {
            let a = required(data.articles, &cfg.paths.dev_articles, "articles")?;
            let s = required(data.summaries, &cfg.paths.dev_summaries, "summaries")?;
            let queries = load_corpus(&a, &s)?.pairs;
            let index = load_index(&cfg.paths.index)?;
            let reranker = match cfg.template_mode {
                TemplateMode::Reranked if cfg.paths.rerank_checkpoint.exists() => {
                    Some(pipeline::load_reranker(&cfg.paths.rerank_checkpoint)?)
                }
                _ => None,
            };
            let src = TemplateSource { index: &index, reranker: reranker.as_ref(), n: cfg.retrieval_n, seed: cfg.seed };
            print_report(&pipeline::run_template_quality_sweep(&cfg, &src, &queries, &ns, exclude_self)?)
        }
        Command::Ablate { train_articles, train_summaries, test_articles, test_summaries, interactions } => {
            let train = train_pairs(&cfg, Labeled { articles: train_articles, summaries: train_summaries })?;
            let test = test_pairs(&cfg, Labeled { articles: test_articles, summaries: test_summaries })?;
            let report = if interactions {
                pipeline::run_interaction_comparison(&cfg, &train, &test)?
            } else {
                pipeline::run_ablation(&cfg, &train, &test)?
            };
            print_report(&report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
