//! Seeded synthetic corpora for overfitting checks and desk-scale trend
//! experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rerank::RerankExample;
use crate::retrieval::ArticleSummaryPair;

fn word(prefix: &str, i: usize) -> String {
    // letters only, so the words survive retrieval normalization
    let mut s = String::from(prefix);
    let mut n = i;
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    s
}

/// 20 (article, candidate) pairs: 4 articles with 5 candidates each. Two
/// candidates per article reuse the article's own words (target 0.9), the
/// other three come from unrelated vocabularies (target 0.1).
pub fn separable_rerank_set(seed: u64) -> Vec<RerankExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topics: Vec<Vec<String>> = (0..4).map(|t| (0..10).map(|i| word(&format!("t{}", (b'a' + t) as char), i)).collect()).collect();
    let mut out = Vec::new();
    for (a, topic) in topics.iter().enumerate() {
        let article: Vec<String> = (0..8).map(|_| topic.choose(&mut rng).unwrap().clone()).collect();
        for c in 0..5 {
            let (source, target) = if c < 2 { (&article, 0.9) } else { (&topics[(a + c - 1) % 4], 0.1) };
            let candidate: Vec<String> = (0..4).map(|_| source.choose(&mut rng).unwrap().clone()).collect();
            out.push(RerankExample { article_id: a, candidate_id: a * 5 + c, article: article.clone(), candidate, target });
        }
    }
    out
}

/// Sixteen short article/summary pairs over a vocabulary of under 60 words.
/// Each article is a topic noun, an action and some filler; the summary
/// restates the topic and action in a fixed pattern.
pub fn toy_overfit_corpus() -> Vec<ArticleSummaryPair> {
    let subjects = ["police", "union", "senate", "court", "army", "bank", "rebels", "city"];
    let actions = [("arrest", "arrested"), ("strike", "struck"), ("vote", "voted"), ("rule", "ruled")];
    let places = ["in", "near"];
    let fillers = ["paris", "tokyo", "monday", "friday", "officials", "said", "on", "the"];
    let mut pairs = Vec::new();
    for i in 0..16 {
        let subj = subjects[i % subjects.len()];
        let (verb, past) = actions[(i / 2) % actions.len()];
        let filler_a = fillers[(i + i / 8) % fillers.len()];
        let filler_b = fillers[(i * 3 + 1) % fillers.len()];
        let place = places[i % 2];
        let article = format!("the {subj} {past} {place} {filler_a} {filler_b} officials said on #");
        let summary = format!("{subj} {verb} {filler_a}");
        pairs.push(ArticleSummaryPair::new(i, &article, &summary));
    }
    pairs
}

/// Parameters of the topic corpus generator.
#[derive(Clone, Debug)]
pub struct TopicCorpusSpec {
    pub pairs: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    /// Recurring stories per topic, each with its own canonical headline.
    pub events_per_topic: usize,
    pub filler_vocab: usize,
    /// Headline words repeated in the article.
    pub event_words_in_article: usize,
    /// Other words of the topic in the article.
    pub topic_words_in_article: usize,
    pub filler_words_in_article: usize,
    pub summary_len: usize,
    /// Headline positions replaced by a random topic word in each summary.
    pub summary_noise: usize,
}

impl Default for TopicCorpusSpec {
    fn default() -> Self {
        TopicCorpusSpec {
            pairs: 500,
            topics: 25,
            words_per_topic: 12,
            events_per_topic: 4,
            filler_vocab: 400,
            event_words_in_article: 3,
            topic_words_in_article: 2,
            filler_words_in_article: 15,
            summary_len: 6,
            summary_noise: 1,
        }
    }
}

/// Articles mix a few headline and topic words with many Zipf-distributed
/// filler words; a summary is its event's headline with a little noise.
/// Lexical retrieval is therefore noisy (fillers dominate term overlap)
/// while summaries of the same event overlap strongly, bigrams included.
pub fn topic_corpus(spec: &TopicCorpusSpec, seed: u64) -> Vec<ArticleSummaryPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topic_words: Vec<Vec<String>> = (0..spec.topics)
        .map(|t| (0..spec.words_per_topic).map(|i| word(&format!("{}q", word("", t)), i)).collect())
        .collect();
    let mut headlines = Vec::new();
    for words in &topic_words {
        let mut events = Vec::new();
        for _ in 0..spec.events_per_topic.max(1) {
            events.push((0..spec.summary_len).map(|_| words.choose(&mut rng).unwrap().clone()).collect::<Vec<_>>());
        }
        headlines.push(events);
    }
    let fillers: Vec<String> = (0..spec.filler_vocab).map(|i| word("f", i)).collect();
    let zipf: Vec<f64> = (1..=spec.filler_vocab).map(|r| 1.0 / r as f64).collect();
    let total: f64 = zipf.iter().sum();
    let draw_filler = |rng: &mut ChaCha8Rng| {
        let mut u = rng.gen::<f64>() * total;
        for (i, w) in zipf.iter().enumerate() {
            if u < *w {
                return fillers[i].clone();
            }
            u -= w;
        }
        fillers[spec.filler_vocab - 1].clone()
    };
    (0..spec.pairs)
        .map(|id| {
            let t = rng.gen_range(0..spec.topics);
            let headline = headlines[t].choose(&mut rng).unwrap();
            let topic = &topic_words[t];
            let mut article: Vec<String> = Vec::new();
            for _ in 0..spec.event_words_in_article {
                article.push(headline.choose(&mut rng).unwrap().clone());
            }
            for _ in 0..spec.topic_words_in_article {
                article.push(topic.choose(&mut rng).unwrap().clone());
            }
            for _ in 0..spec.filler_words_in_article {
                article.push(draw_filler(&mut rng));
            }
            article.shuffle(&mut rng);
            let mut summary = headline.clone();
            for _ in 0..spec.summary_noise {
                if !summary.is_empty() {
                    let at = rng.gen_range(0..summary.len());
                    summary[at] = topic.choose(&mut rng).unwrap().clone();
                }
            }
            ArticleSummaryPair { id, article, summary }
        })
        .collect()
}
