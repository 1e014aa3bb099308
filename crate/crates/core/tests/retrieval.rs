use biset_core::retrieval::{
    build_index, decode_index, encode_index, load_index, normalize, retrieve, retrieve_tokens, save_index,
    ArticleSummaryPair, InvertedIndex, Posting, QueryStatus,
};
use biset_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima",
    "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango", "uniform", "victor",
];

fn random_corpus(rng: &mut ChaCha8Rng, docs: usize) -> Vec<ArticleSummaryPair> {
    (0..docs)
        .map(|id| {
            let len = rng.gen_range(1..12);
            let art: Vec<&str> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            ArticleSummaryPair::new(id, &art.join(" "), &format!("s{id} #"))
        })
        .collect()
}

/// Direct BM25 over raw documents, recomputing every statistic from scratch.
fn brute_bm25(docs: &[Vec<String>], query: &[String]) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for q in query {
                let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
                let tf = doc.iter().filter(|t| *t == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * doc.len() as f64 / avg));
            }
            score
        })
        .collect()
}

fn normalized_docs(corpus: &[ArticleSummaryPair]) -> Vec<Vec<String>> {
    corpus.iter().map(|p| normalize(&p.article_text())).collect()
}

#[test]
fn bm25_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..20 {
        let size = rng.gen_range(1..=200);
        let corpus = random_corpus(&mut rng, size);
        let index = build_index(&corpus).unwrap();
        let docs = normalized_docs(&corpus);
        let qlen = rng.gen_range(1..8);
        let query: Vec<String> = (0..qlen).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect();
        let expected = brute_bm25(&docs, &query);
        let got = retrieve_tokens(&index, &query, size, None).unwrap();
        assert_eq!(got.results.len(), size);
        for r in &got.results {
            assert!((r.score - expected[r.id]).abs() < 1e-9, "trial {trial} doc {}", r.id);
        }
        for w in got.results.windows(2) {
            assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].id < w[1].id));
        }
    }
}

#[test]
fn self_retrieval_ranks_the_document_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut corpus = random_corpus(&mut rng, 12);
    corpus[7] = ArticleSummaryPair::new(7, "zulu yankee xray whiskey alpha", "gold");
    let index = build_index(&corpus).unwrap();
    let r = retrieve(&index, &corpus[7].article_text(), 5).unwrap();
    assert_eq!(r.status, QueryStatus::Ok);
    assert_eq!(r.results[0].id, 7);
    assert_eq!(r.results[0].template, vec!["gold"]);
}

#[test]
fn unique_rare_term_wins() {
    let corpus = vec![
        ArticleSummaryPair::new(0, "common words here common", "a"),
        ArticleSummaryPair::new(1, "common words platypus", "b"),
        ArticleSummaryPair::new(2, "words common words", "c"),
    ];
    let index = build_index(&corpus).unwrap();
    let query = normalize("platypus common words");
    let oracle = brute_bm25(&normalized_docs(&corpus), &query);
    let best = (0..3).max_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap();
    assert_eq!(best, 1);
    let r = retrieve_tokens(&index, &query, 3, None).unwrap();
    assert_eq!(r.results[0].id, 1);
}

#[test]
fn n_beyond_corpus_returns_everything_sorted() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpus = random_corpus(&mut rng, 6);
    let index = build_index(&corpus).unwrap();
    let r = retrieve(&index, "alpha bravo", 100).unwrap();
    assert_eq!(r.results.len(), 6);
    for w in r.results.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
}

fn check_invariants(index: &InvertedIndex, corpus: &[ArticleSummaryPair]) {
    let mut lengths = vec![0usize; index.doc_count()];
    for term in index.terms() {
        let postings = index.postings(term);
        for w in postings.windows(2) {
            assert!(w[0].doc < w[1].doc, "postings of {term} not strictly ascending");
        }
        for p in postings {
            lengths[p.doc] += p.tf;
        }
    }
    assert_eq!(lengths, index.doc_lengths());
    assert_eq!(index.doc_count(), corpus.len());
}

#[test]
fn index_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let corpus = random_corpus(&mut rng, 40);
    let index = build_index(&corpus).unwrap();
    check_invariants(&index, &corpus);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.idx");
    save_index(&index, &path).unwrap();
    let loaded = load_index(&path).unwrap();
    assert_eq!(loaded, index);
    let original = std::fs::read(&path).unwrap();
    assert!(original.starts_with(b"BISETIDX1\n"));
    assert_eq!(encode_index(&loaded), original);
    assert!(decode_index(&original[..original.len() - 1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn adding_a_document_keeps_oracle_parity(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = rng.gen_range(2..30);
        let mut corpus = random_corpus(&mut rng, size);
        let query: Vec<String> = (0..3).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect();
        corpus.extend(random_corpus(&mut rng, 1).into_iter().map(|mut p| { p.id = size; p }));
        let index = build_index(&corpus).unwrap();
        check_invariants(&index, &corpus);
        let oracle = brute_bm25(&normalized_docs(&corpus), &query);
        let got = retrieve_tokens(&index, &query, corpus.len(), None).unwrap();
        // relative order among the original documents agrees with the oracle
        let order: Vec<usize> = got.results.iter().map(|r| r.id).filter(|&id| id < size).collect();
        let mut expected: Vec<usize> = (0..size).collect();
        expected.sort_by(|&a, &b| oracle[b].total_cmp(&oracle[a]).then(a.cmp(&b)));
        prop_assert_eq!(order, expected);
    }
}

fn pair(id: usize, article: &str) -> ArticleSummaryPair {
    ArticleSummaryPair::new(id, article, &format!("summary {id}"))
}

#[test]
fn normalize_examples() {
    assert_eq!(
        normalize("Factory orders rose #.# percent in September, 1995"),
        vec!["factory", "orders", "rose", "percent", "in", "september"]
    );
    assert!(normalize("####").is_empty());
    assert_eq!(normalize("a   b"), vec!["a", "b"]);
}

#[test]
fn build_counts_terms() {
    let idx = build_index(&[pair(0, "a b a")]).unwrap();
    assert_eq!(idx.postings("a"), &[Posting { doc: 0, tf: 2 }]);
    assert_eq!(idx.postings("b"), &[Posting { doc: 0, tf: 1 }]);
    assert_eq!(idx.doc_lengths(), &[3]);
    assert_eq!(idx.avg_doc_length(), 3.0);
}

#[test]
fn build_errors() {
    assert!(matches!(build_index(&[]), Err(Error::Build(_))));
    assert!(matches!(build_index(&[pair(0, "## 12"), pair(1, "#")]), Err(Error::Build(_))));
}

#[test]
fn disjoint_documents_have_singleton_postings() {
    let idx = build_index(&[pair(0, "x y"), pair(1, "z w")]).unwrap();
    for t in idx.terms() {
        assert_eq!(idx.postings(t).len(), 1);
    }
}

#[test]
fn empty_query_is_flagged() {
    let idx = build_index(&[pair(0, "x y")]).unwrap();
    let r = retrieve(&idx, "#.# 1995", 5).unwrap();
    assert_eq!(r.status, QueryStatus::EmptyQuery);
    assert!(r.results.is_empty());
    assert!(matches!(retrieve(&idx, "x", 0), Err(Error::Usage(_))));
}

#[test]
fn exclusion_skips_the_query_document() {
    let idx = build_index(&[pair(0, "x y"), pair(1, "x z"), pair(2, "q")]).unwrap();
    let r = retrieve_tokens(&idx, &normalize("x y"), 3, Some(0)).unwrap();
    assert_eq!(r.results.iter().map(|r| r.id).collect::<Vec<_>>(), vec![1, 2]);
}
