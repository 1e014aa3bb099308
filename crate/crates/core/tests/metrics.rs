use biset_core::metrics::{corpus_report, lcs_len, rouge_l, rouge_n, rouge_w, LcsMode, RougeScore};
use biset_core::Error;
use biset_core::retrieval::ArticleSummaryPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multiset intersection by repeatedly removing matched n-grams.
fn brute_overlap(cand: &[u8], refr: &[u8], n: usize) -> (usize, usize, usize) {
    let grams = |s: &[u8]| -> Vec<Vec<u8>> {
        if s.len() < n {
            vec![]
        } else {
            (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
        }
    };
    let c = grams(cand);
    let mut r = grams(refr);
    let (cn, rn) = (c.len(), r.len());
    let mut hits = 0;
    for g in &c {
        if let Some(pos) = r.iter().position(|x| x == g) {
            r.remove(pos);
            hits += 1;
        }
    }
    (hits, cn, rn)
}

/// Longest common subsequence by enumerating every subsequence of `a`.
fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let is_subseq = |sub: &[u8]| {
        let mut it = b.iter();
        sub.iter().all(|x| it.any(|y| y == x))
    };
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<u8> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
        if sub.len() > best && is_subseq(&sub) {
            best = sub.len();
        }
    }
    best
}

fn f1(hits: usize, cn: usize, rn: usize) -> f64 {
    let p = if cn == 0 { 0.0 } else { hits as f64 / cn as f64 };
    let r = if rn == 0 { 0.0 } else { hits as f64 / rn as f64 };
    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
}

fn random_seq(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = rng.gen_range(0..9);
    (0..len).map(|_| rng.gen_range(0..5u8)).collect()
}

#[test]
fn rouge_matches_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let (c, r) = (random_seq(&mut rng), random_seq(&mut rng));
        for n in 1..=2 {
            let (hits, cn, rn) = brute_overlap(&c, &r, n);
            let got = rouge_n(&c, &r, n);
            assert_eq!(got.f1, f1(hits, cn, rn), "{c:?} {r:?} n={n}");
            assert!((0.0..=1.0).contains(&got.precision) && (0.0..=1.0).contains(&got.recall));
        }
        let lcs = brute_lcs(&c, &r);
        assert_eq!(lcs_len(&c, &r), lcs);
        let l = rouge_l(&c, &r);
        assert_eq!(l.f1, f1(lcs, c.len(), r.len()));
        let swapped = rouge_l(&r, &c);
        assert_eq!((l.precision, l.recall), (swapped.recall, swapped.precision));
    }
}

#[test]
fn published_examples_score_strictly_between_bounds() {
    // generated summaries against references, lowercased with '#' masks kept
    let pairs = [
        ("factory orders up #.# percent in september .", "september factory orders up #.# percent ."),
        (
            "#.# billions around world expected to watch world cup .",
            "#.# billion tv viewers expected for opening world cup match .",
        ),
    ];
    let cands: Vec<Vec<String>> = pairs.iter().map(|(c, _)| ArticleSummaryPair::new(0, c, "x").article).collect();
    let refs: Vec<Vec<String>> = pairs.iter().map(|(_, r)| ArticleSummaryPair::new(0, r, "x").article).collect();
    let table = corpus_report("BiSET", &cands, &refs, LcsMode::Plain).unwrap();
    for v in table.rows[0].1.percent() {
        assert!(v > 0.0 && v < 100.0, "{v}");
    }
}

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

#[test]
fn rouge_n_examples() {
    let (c, r) = (toks("a b c"), toks("a b d"));
    let s1 = rouge_n(&c, &r, 1);
    assert!((s1.precision - 2.0 / 3.0).abs() < 1e-15);
    assert!((s1.recall - 2.0 / 3.0).abs() < 1e-15);
    assert!((s1.f1 - 2.0 / 3.0).abs() < 1e-15);
    let s2 = rouge_n(&c, &r, 2);
    assert_eq!((s2.precision, s2.recall, s2.f1), (0.5, 0.5, 0.5));
    assert_eq!(rouge_n(&c, &c, 1).f1, 1.0);
    assert_eq!(rouge_n(&toks("a"), &toks("a"), 2), RougeScore::default());
}

#[test]
fn rouge_n_clips_repeated_ngrams() {
    let s = rouge_n(&toks("the the the"), &toks("the cat"), 1);
    assert_eq!(s.precision, 1.0 / 3.0);
    assert_eq!(s.recall, 0.5);
}

#[test]
fn rouge_l_examples() {
    let s = rouge_l(&toks("a x b"), &toks("a b"));
    assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(s.recall, 1.0);
    assert!((s.f1 - 0.8).abs() < 1e-15);
    assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")).f1, 1.0);
    assert_eq!(rouge_l(&toks("a b"), &toks("c d")).f1, 0.0);
    assert_eq!(rouge_l::<&str>(&[], &toks("c d")).f1, 0.0);
}

#[test]
fn weighted_lcs_prefers_consecutive_matches() {
    let r = toks("a b c d");
    let consecutive = rouge_w(&toks("a b c d x y z"), &r, 1.2);
    let scattered = rouge_w(&toks("a x b y c z d"), &r, 1.2);
    assert!(consecutive.f1 > scattered.f1);
    assert!((rouge_w(&r, &r, 1.2).f1 - 1.0).abs() < 1e-12);
}

#[test]
fn corpus_report_examples() {
    let same = vec![toks("a b c"), toks("d e")];
    let t = corpus_report("m", &same, &same, LcsMode::Plain).unwrap();
    assert_eq!(t.rows[0].1.percent(), [100.0, 100.0, 100.0]);
    assert!(t.to_string().contains(" 100.00  100.00  100.00"));

    let cands = vec![toks("a b"), toks("x y")];
    let refs = vec![toks("a b"), toks("c d")];
    let t = corpus_report("m", &cands, &refs, LcsMode::Plain).unwrap();
    assert_eq!(t.rows[0].1.percent(), [50.0, 50.0, 50.0]);
    assert_eq!(t.records(), vec!["row=m rouge1=50.00 rouge2=50.00 rougeL=50.00"]);

    let err = corpus_report("m", &cands[..1], &refs, LcsMode::Plain);
    assert!(matches!(err, Err(Error::Usage(_))));
}
