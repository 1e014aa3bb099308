use std::fs;

use biset_core::biset::{Biset, BisetConfig, Interaction};
use biset_core::metrics::rouge_n;
use biset_core::ndtensor::encode_checkpoint;
use biset_core::pipeline::synthetic::{separable_rerank_set, topic_corpus, toy_overfit_corpus, TopicCorpusSpec};
use biset_core::pipeline::*;
use biset_core::rerank::{RerankConfig, Reranker};
use biset_core::retrieval::{build_index, encode_index, normalize, ArticleSummaryPair};
use biset_core::vocab::{Vocab, UNK};
use biset_core::Error;
use tempfile::tempdir;

fn tiny() -> PipelineConfig {
    let mut cfg = PipelineConfig::mini();
    cfg.retrieval_n = 5;
    cfg.rerank = RerankConfig { emb_dim: 8, hidden: 8, ..cfg.rerank };
    cfg.rerank_train.steps = 20;
    cfg.biset = BisetConfig { emb_dim: 8, hidden: 8, max_decode_len: 8, ..cfg.biset };
    cfg.biset_train.steps = 20;
    cfg
}

fn pair(id: usize, article: &str, summary: &str) -> ArticleSummaryPair {
    ArticleSummaryPair::new(id, article, summary)
}

#[test]
fn paper_profile_defaults() {
    let cfg = PipelineConfig::paper();
    assert_eq!(cfg.profile, Profile::Paper);
    assert_eq!(cfg.retrieval_n, 30);
    assert_eq!(cfg.beam, 5);

    assert_eq!(cfg.rerank.emb_dim, 300);
    assert_eq!(cfg.rerank.width, 3);
    assert_eq!(cfg.rerank.k_pool, 10);
    assert_eq!(cfg.rerank.init_scale, 0.08);
    assert_eq!(cfg.rerank_train.batch_size, 64);
    assert_eq!(cfg.rerank_train.weight_decay, 3e-6);
    assert_eq!(cfg.rerank_train.grad_clip, 5.0);
    assert_eq!(cfg.rerank_train.schedule.base, 0.001);
    assert_eq!(cfg.rerank_train.schedule.at(9_999), 0.001);
    assert!((cfg.rerank_train.schedule.at(10_000) - 1e-4).abs() < 1e-18);
    assert!((cfg.rerank_train.schedule.at(20_000) - 1e-5).abs() < 1e-18);

    assert_eq!(cfg.biset.emb_dim, 500);
    assert_eq!(cfg.biset.hidden, 500);
    assert_eq!(cfg.biset.layers, 2);
    assert_eq!(cfg.biset.dropout, 0.3);
    assert_eq!(cfg.biset.init_scale, 0.08);
    assert_eq!(cfg.biset.interaction, Interaction::Biset);
    assert_eq!(cfg.biset_train.batch_size, 64);
    assert_eq!(cfg.biset_train.grad_clip, 5.0);
    assert_eq!(cfg.biset_train.weight_decay, 0.0);
    assert_eq!(cfg.biset_train.schedule.at(49_999), 0.001);
    assert_eq!(cfg.biset_train.schedule.at(50_000), 0.0005);
    assert_eq!(cfg.biset_train.schedule.at(60_000), 0.00025);
}

#[test]
fn config_records_round_trip() {
    for base in [PipelineConfig::mini(), PipelineConfig::paper()] {
        let mut cfg = base.clone();
        cfg.seed = 42;
        cfg.biset.interaction = Interaction::Dcn;
        cfg.template_mode = TemplateMode::NOptimal(7);
        cfg.paths.train_articles = Some("a.txt".into());
        cfg.rerank_train.target_loss = Some(0.5);
        let mut back = PipelineConfig::for_profile(cfg.profile);
        back.apply_text(&cfg.records().join("\n")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(base.hash(), cfg.hash());
    }
}

#[test]
fn config_file_errors() {
    let mut cfg = PipelineConfig::mini();
    cfg.apply_text("// comment\n\nseed = 9\nbiset.interaction = concat_selfatt\n").unwrap();
    assert_eq!(cfg.seed, 9);
    for bad in ["nonsense = 1", "seed = x", "biset.interaction = lstm", "no equals sign", "profile = paper", "beam = 0"] {
        let mut cfg = PipelineConfig::mini();
        assert!(matches!(cfg.apply_text(bad), Err(Error::Config(_))), "{bad}");
    }
    let err = PipelineConfig::load(Profile::Mini, Some("/nonexistent/cfg".as_ref())).unwrap_err();
    assert!(matches!(err, Error::MissingArtifact(_)));
}

#[test]
fn load_corpus_examples() {
    let dir = tempdir().unwrap();
    let (a, s) = (dir.path().join("a"), dir.path().join("s"));
    fs::write(&a, "Factory orders rose #.# percent\nthe cat sat\nmarkets fell\n").unwrap();
    fs::write(&s, "orders up #.# pct\n\nMarkets Fall\n").unwrap();
    let c = load_corpus(&a, &s).unwrap();
    assert_eq!(c.dropped, 1);
    assert_eq!(c.pairs.len(), 2);
    assert_eq!(c.pairs[0].article, vec!["factory", "orders", "rose", "#.#", "percent"]);
    assert_eq!(c.pairs[1].id, 2);
    assert_eq!(c.pairs[1].summary, vec!["markets", "fall"]);

    fs::write(&s, "x\ny\nz\n").unwrap();
    assert_eq!(load_corpus(&a, &s).unwrap().pairs.len(), 3);

    fs::write(&s, "only one\n").unwrap();
    let err = load_corpus(&a, &s).unwrap_err();
    assert!(matches!(&err, Error::Ingestion(m) if m.contains('3') && m.contains('1')));
    assert!(matches!(load_corpus(&dir.path().join("missing"), &s), Err(Error::MissingArtifact(_))));
}

fn train_corpus() -> Vec<ArticleSummaryPair> {
    vec![
        pair(0, "storm hits coast city", "storm hits coast"),
        pair(1, "storm floods coast towns", "coast towns flooded"),
        pair(2, "bank raises interest rates", "bank raises rates"),
        pair(3, "central bank cuts rates", "bank cuts rates"),
        pair(4, "team wins cup final", "team wins cup"),
    ]
}

#[test]
fn template_modes() {
    let train = train_corpus();
    let index = build_index(&train).unwrap();
    let src = TemplateSource { index: &index, reranker: None, n: 5, seed: 3 };
    let queries = vec![pair(10, "the bank raises rates again", "bank raises rates")];

    let top = make_templates(&src, &queries, TemplateMode::RetrieveTop, false).unwrap();
    let one = make_templates(&src, &queries, TemplateMode::NOptimal(1), false).unwrap();
    assert_eq!(top[0].template, one[0].template);
    assert_eq!(top[0].rank, Some(0));

    // the gold summary is among the candidates: N-Optimal finds it
    let best = make_templates(&src, &queries, TemplateMode::NOptimal(5), false).unwrap();
    assert_eq!(best[0].template, queries[0].summary);
    assert_eq!(best[0].score, Some(1.0));

    let r1 = make_templates(&src, &train, TemplateMode::Random, true).unwrap();
    let r2 = make_templates(&src, &train, TemplateMode::Random, true).unwrap();
    assert_eq!(r1, r2);
    assert!(r1.iter().all(|c| c.template_id != c.query_id));

    let excluded = make_templates(&src, &train, TemplateMode::RetrieveTop, true).unwrap();
    assert!(excluded.iter().all(|c| c.template_id != c.query_id));

    let unlabeled = vec![pair(0, "storm", "")];
    assert!(matches!(make_templates(&src, &unlabeled, TemplateMode::NOptimal(3), false), Err(Error::Usage(_))));
    assert!(matches!(make_templates(&src, &queries, TemplateMode::Reranked, false), Err(Error::Usage(_))));

    // nothing alphabetic to retrieve with: seeded random fallback
    let numeric = vec![pair(7, "## #.#", "")];
    let fb = make_templates(&src, &numeric, TemplateMode::RetrieveTop, false).unwrap();
    assert!(fb[0].fallback);
    assert_eq!(fb, make_templates(&src, &numeric, TemplateMode::RetrieveTop, false).unwrap());
}

#[test]
fn n_optimal_ties_go_to_the_lowest_rank() {
    let train = vec![pair(0, "alpha beta", "x y"), pair(1, "alpha", "x z"), pair(2, "gamma", "q")];
    let index = build_index(&train).unwrap();
    let src = TemplateSource { index: &index, reranker: None, n: 3, seed: 0 };
    let q = vec![pair(9, "alpha beta", "x w")];
    let c = make_templates(&src, &q, TemplateMode::NOptimal(3), false).unwrap();
    assert_eq!(c[0].rank, Some(0));
    assert_eq!(c[0].template_id, 0);
}

#[test]
fn template_sweep_is_monotone_in_n() {
    let corpus = topic_corpus(&TopicCorpusSpec { pairs: 150, ..Default::default() }, 5);
    let index = build_index(&corpus).unwrap();
    let cfg = PipelineConfig::mini();
    let src = TemplateSource { index: &index, reranker: None, n: 30, seed: 1 };
    let report = run_template_quality_sweep(&cfg, &src, &corpus, &[1, 5, 10, 20, 30], true).unwrap();
    let rows = &report.table.rows;
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0].0, "Random");
    assert_eq!(rows[1].1, rows[2].1, "Retrieve-top equals N-Optimal(1)");
    for w in rows[2..].windows(2) {
        assert!(w[1].1.rouge1 >= w[0].1.rouge1, "{} < {}", w[1].0, w[0].0);
    }
    assert!(report.records().iter().any(|r| r.starts_with("config_hash=")));

    // disjoint vocabularies: random templates share nothing with the gold
    let disjoint: Vec<ArticleSummaryPair> =
        (0..6).map(|i| pair(i, &format!("art{i}x"), &format!("sum{i}a sum{i}b"))).collect();
    let idx = build_index(&disjoint).unwrap();
    let src = TemplateSource { index: &idx, reranker: None, n: 3, seed: 4 };
    let r = run_template_quality_sweep(&cfg, &src, &disjoint, &[3], true).unwrap();
    assert_eq!(r.table.rows[0].1.rouge1, 0.0);
}

#[test]
fn artifacts_round_trip_bit_exactly() {
    let dir = tempdir().unwrap();
    let train = train_corpus();
    let vocab = build_vocab(&train, 1);
    let cfg = tiny();

    let reranker = Reranker::new(cfg.rerank.clone(), vocab.clone(), 5).unwrap();
    let path = dir.path().join("m/rerank.ckpt");
    save_reranker(&reranker, &path).unwrap();
    let loaded = load_reranker(&path).unwrap();
    assert_eq!(loaded.config, reranker.config);
    assert_eq!(loaded.vocab, reranker.vocab);
    assert_eq!(encode_checkpoint(&loaded.params), fs::read(&path).unwrap());

    for interaction in Interaction::ALL {
        let model = Biset::new(BisetConfig { interaction, ..cfg.biset.clone() }, vocab.clone(), 6).unwrap();
        let path = dir.path().join(format!("{interaction}.ckpt"));
        save_biset(&model, &path).unwrap();
        let back = load_biset(&path).unwrap();
        assert_eq!(back.config, model.config);
        assert_eq!(back.params, model.params);
        assert_eq!(encode_checkpoint(&back.params), fs::read(&path).unwrap());
    }

    assert!(matches!(load_biset(&dir.path().join("nope")), Err(Error::MissingArtifact(_))));
    fs::remove_file(meta_path(&path)).unwrap();
    assert!(matches!(load_biset(&path), Err(Error::MissingArtifact(_))));
    // a rerank checkpoint is not a summarizer
    let rpath = dir.path().join("m/rerank.ckpt");
    assert!(load_biset(&rpath).is_err());
}

fn write_artifacts(dir: &std::path::Path, cfg: &mut PipelineConfig, train: &[ArticleSummaryPair]) {
    cfg.paths.index = dir.join("index.bin");
    cfg.paths.rerank_checkpoint = dir.join("rerank.ckpt");
    cfg.paths.biset_checkpoint = dir.join("biset.ckpt");
    let exp = Experiment::prepare(cfg, train, &[]).unwrap();
    biset_core::retrieval::save_index(&exp.index, &cfg.paths.index).unwrap();
    save_reranker(exp.reranker.as_ref().unwrap(), &cfg.paths.rerank_checkpoint).unwrap();
    let (model, _) = train_summarizer(cfg, &cfg.biset, exp.vocab.clone(), &exp.train_examples).unwrap();
    save_biset(&model, &cfg.paths.biset_checkpoint).unwrap();
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let dir = tempdir().unwrap();
    let train = toy_overfit_corpus();
    let mut cfg = tiny();
    write_artifacts(dir.path(), &mut cfg, &train);

    let p = Pipeline::load(cfg.clone()).unwrap();
    let out = run_full_pipeline(&p, &train[3]).unwrap();
    assert!(out.template.rank.is_some());
    assert!(out.summary.len() <= cfg.biset.max_decode_len);
    let again = Pipeline::load(cfg.clone()).unwrap();
    assert_eq!(run_full_pipeline(&again, &train[3]).unwrap(), out);

    let numeric = pair(99, "# #.#", "");
    let fb = run_full_pipeline(&p, &numeric).unwrap();
    assert!(fb.template.fallback);

    let r1 = p.evaluate(&train).unwrap();
    let r2 = again.evaluate(&train).unwrap();
    assert_eq!(r1.records(), r2.records());
    assert_eq!(r1.to_string(), r2.to_string());

    fs::remove_file(&cfg.paths.rerank_checkpoint).unwrap();
    assert!(matches!(Pipeline::load(cfg.clone()), Err(Error::MissingArtifact(p)) if p == cfg.paths.rerank_checkpoint));
    cfg.template_mode = TemplateMode::RetrieveTop;
    assert!(Pipeline::load(cfg).is_ok());
}

#[test]
fn ablation_report_has_four_named_rows() {
    let corpus = topic_corpus(&TopicCorpusSpec { pairs: 24, ..Default::default() }, 2);
    let (train, test) = corpus.split_at(20);
    let mut cfg = tiny();
    cfg.template_mode = TemplateMode::RetrieveTop;
    cfg.biset_train.steps = 3;
    let report = run_ablation(&cfg, train, test).unwrap();
    let names: Vec<&str> = report.table.rows.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["Concatenation", "BiSET w/o T2A", "BiSET w/o A2T", "BiSET"]);
    assert_eq!(report.meta.steps.len(), 4);
    assert!(report.meta.steps.iter().all(|(_, s)| *s == 3));
    assert_eq!(report, run_ablation(&cfg, train, test).unwrap());

    let cmp = run_interaction_comparison(&cfg, train, test).unwrap();
    assert_eq!(cmp.table.rows.len(), 4);
    assert_eq!(cmp.table.rows[3].0, "BiSET");
}

#[test]
fn rerank_dataset_targets_are_rouge_one() {
    let train = train_corpus();
    let index = build_index(&train).unwrap();
    let data = biset_core::rerank::build_rerank_dataset(&train, &index, 3).unwrap();
    for ex in &data {
        assert_ne!(ex.article_id, ex.candidate_id);
        let gold = &train[ex.article_id].summary;
        assert_eq!(ex.target, rouge_n(&ex.candidate, gold, 1).f1);
    }
    let _ = encode_index(&index);
}

#[test]
fn specials_come_first_and_oov_maps_to_unk() {
    let seqs = vec![vec!["b".to_string(), "a".into(), "b".into()]];
    let v = Vocab::build(&seqs, 1);
    assert_eq!(v.token(0), "<pad>");
    assert_eq!(v.id("b"), 4);
    assert_eq!(v.id("a"), 5);
    assert_eq!(v.id("zzz"), UNK);
    assert_eq!(v.decode(&v.encode(&seqs[0])), seqs[0]);
}

#[test]
fn generated_words_survive_normalization() {
    let spec = TopicCorpusSpec { pairs: 50, filler_vocab: 1000, ..Default::default() };
    for p in topic_corpus(&spec, 3) {
        assert_eq!(normalize(&p.article_text()), p.article);
        assert_eq!(normalize(&p.summary.join(" ")), p.summary);
    }
}

#[test]
fn toy_corpus_shape() {
    let c = toy_overfit_corpus();
    assert_eq!(c.len(), 16);
    let mut summaries: Vec<_> = c.iter().map(|p| p.summary.clone()).collect();
    summaries.sort();
    summaries.dedup();
    assert_eq!(summaries.len(), 16);
}

#[test]
fn generators_are_seeded() {
    let spec = TopicCorpusSpec { pairs: 20, ..Default::default() };
    assert_eq!(topic_corpus(&spec, 1), topic_corpus(&spec, 1));
    assert_eq!(separable_rerank_set(3), separable_rerank_set(3));
    assert_eq!(separable_rerank_set(3).len(), 20);
}
