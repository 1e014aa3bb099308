use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ndtensor::{Dropout, ParamStore, Tape, Tensor, Var};
use crate::vocab::Vocab;

pub const EMBEDDING: &str = "emb";
pub const CONV_KERNEL: &str = "conv.kernel";
pub const CONV_BIAS: &str = "conv.bias";
pub const SCORER_W_A: &str = "score.w_a";
pub const SCORER_B_1: &str = "score.b_1";
pub const SCORER_W_S: &str = "score.w_s";
pub const SCORER_B_2: &str = "score.b_2";

#[derive(Clone, Debug, PartialEq)]
pub struct RerankConfig {
    /// Word embedding width `d`.
    pub emb_dim: usize,
    /// Convolution window (odd).
    pub width: usize,
    /// `k` of k-max pooling.
    pub k_pool: usize,
    /// Hidden width of the two-layer scorer.
    pub hidden: usize,
    pub dropout: f64,
    pub init_scale: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig { emb_dim: 300, width: 3, k_pool: 10, hidden: 64, dropout: 0.2, init_scale: 0.08 }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width % 2 == 0 {
            return Err(Error::Config(format!("rerank kernel width {} must be odd", self.width)));
        }
        if self.emb_dim == 0 || self.k_pool == 0 || self.hidden == 0 {
            return Err(Error::Config("rerank dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("rerank dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Fresh parameters. Embedding and convolution are uniform in
/// `[-init_scale, init_scale]`; the scorer weights are drawn from the
/// non-negative half of that range so an untrained scorer is monotone in
/// the pooled similarities.
pub fn init_params(config: &RerankConfig, vocab_size: usize, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, s) = (config.emb_dim, config.init_scale);
    let mut store = ParamStore::new();
    store.insert(EMBEDDING, Tensor::uniform(vec![vocab_size, d], s, &mut rng));
    store.insert(CONV_KERNEL, Tensor::uniform(vec![2 * d, config.width * d], s, &mut rng));
    store.insert(CONV_BIAS, Tensor::zeros(vec![2 * d]));
    let mut w_a = Tensor::uniform(vec![config.hidden, config.k_pool], s, &mut rng);
    w_a.values_mut().iter_mut().for_each(|v| *v = v.abs());
    let mut w_s = Tensor::uniform(vec![1, config.hidden], s, &mut rng);
    w_s.values_mut().iter_mut().for_each(|v| *v = v.abs());
    store.insert(SCORER_W_A, w_a);
    store.insert(SCORER_B_1, Tensor::zeros(vec![config.hidden]));
    store.insert(SCORER_W_S, w_s);
    store.insert(SCORER_B_2, Tensor::zeros(vec![1]));
    Ok(store)
}

/// Embedding, same-length convolution, GLU and a residual connection:
/// `z_i = GLU(conv(e)_i) + e_i`, giving `[L x d]`.
pub fn encode_block(tape: &mut Tape, params: &ParamStore, ids: &[usize], width: usize) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::shape("encode_block: empty token sequence"));
    }
    let emb = tape.param(params, EMBEDDING)?;
    let e = tape.gather_rows(emb, ids)?;
    let kernel = tape.param(params, CONV_KERNEL)?;
    let bias = tape.param(params, CONV_BIAS)?;
    let h = tape.conv1d_ngram(e, kernel, bias, width)?;
    let r = tape.glu(h)?;
    tape.add(r, e)
}

/// `s_ij = exp(-||S_i - T_j||^2)` for article rows `S` and template rows `T`.
pub fn similarity_matrix(tape: &mut Tape, article: Var, template: Var) -> Result<Var> {
    let d = tape.sq_dist(article, template)?;
    let neg = tape.scale(d, -1.0);
    Ok(tape.exp(neg))
}

/// Column-wise max over article positions followed by k-max pooling:
/// `[m x n]` similarities to a length-`k_pool` vector.
pub fn pool(tape: &mut Tape, sim: Var, k_pool: usize) -> Result<Var> {
    let q = tape.col_max(sim)?;
    tape.k_max(q, k_pool)
}

/// `W_s ReLU(W_a p + b_1) + b_2`, the pre-sigmoid relevance logit.
pub fn score_logit(tape: &mut Tape, params: &ParamStore, pooled: Var, dropout: &mut Dropout) -> Result<Var> {
    let w_a = tape.param(params, SCORER_W_A)?;
    let b_1 = tape.param(params, SCORER_B_1)?;
    let a = tape.matmul(w_a, pooled)?;
    let a = tape.add(a, b_1)?;
    let a = tape.relu(a);
    let a = dropout.apply(tape, a)?;
    let w_s = tape.param(params, SCORER_W_S)?;
    let b_2 = tape.param(params, SCORER_B_2)?;
    let logit = tape.matmul(w_s, a)?;
    tape.add(logit, b_2)
}

pub fn pool_and_score_logit(
    tape: &mut Tape,
    params: &ParamStore,
    sim: Var,
    k_pool: usize,
    dropout: &mut Dropout,
) -> Result<Var> {
    let p = pool(tape, sim, k_pool)?;
    score_logit(tape, params, p, dropout)
}

/// Full pair forward: both encoders (shared weights), similarity, pooling,
/// scorer. Returns the logit. Dropout acts inside the scorer only; masking
/// the two encodings independently would break exact word matches.
pub fn pair_logit(
    tape: &mut Tape,
    params: &ParamStore,
    config: &RerankConfig,
    article: &[usize],
    candidate: &[usize],
    dropout: &mut Dropout,
) -> Result<Var> {
    let s = encode_block(tape, params, article, config.width)?;
    let t = encode_block(tape, params, candidate, config.width)?;
    let sim = similarity_matrix(tape, s, t)?;
    pool_and_score_logit(tape, params, sim, config.k_pool, dropout)
}

/// Binary cross-entropy with the `0 * log 0 = 0` convention.
pub fn bce(score: f64, target: f64) -> f64 {
    let term = |w: f64, p: f64| if w == 0.0 { 0.0 } else { w * p.ln() };
    -(term(target, score) + term(1.0 - target, 1.0 - score))
}

/// A trained (or freshly initialized) Fast Rerank scorer.
#[derive(Clone, Debug)]
pub struct Reranker {
    pub config: RerankConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
}

impl Reranker {
    pub fn new(config: RerankConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        let params = init_params(&config, vocab.len(), seed)?;
        Ok(Reranker { config, vocab, params })
    }

    /// Rebuilds the configuration from parameter shapes.
    pub fn from_params(vocab: Vocab, params: ParamStore, dropout: f64) -> Result<Self> {
        let shape = |name: &str| params.get(name).map(|t| t.shape().to_vec());
        let emb = shape(EMBEDDING)?;
        let kernel = shape(CONV_KERNEL)?;
        let w_a = shape(SCORER_W_A)?;
        if emb.len() != 2 || kernel.len() != 2 || w_a.len() != 2 || emb[0] != vocab.len() {
            return Err(Error::Data("rerank checkpoint does not match its vocabulary".into()));
        }
        let config = RerankConfig {
            emb_dim: emb[1],
            width: kernel[1] / emb[1],
            k_pool: w_a[1],
            hidden: w_a[0],
            dropout,
            init_scale: 0.08,
        };
        config.validate()?;
        Ok(Reranker { config, vocab, params })
    }

    /// Relevance `s` in (0, 1) of one candidate template for an article.
    pub fn score(&self, article: &[String], candidate: &[String]) -> Result<f64> {
        let mut tape = Tape::new();
        let logit = pair_logit(
            &mut tape,
            &self.params,
            &self.config,
            &self.vocab.encode(article),
            &self.vocab.encode(candidate),
            &mut Dropout::eval(),
        )?;
        let s = tape.sigmoid(logit);
        Ok(tape.scalar_value(s))
    }

    /// Scores every candidate; the article is encoded once.
    pub fn score_candidates(&self, article: &[String], candidates: &[Vec<String>]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let s = encode_block(&mut tape, &self.params, &self.vocab.encode(article), self.config.width)?;
        let encoded = tape.to_tensor(s);
        candidates
            .par_iter()
            .map(|cand| {
                let mut tape = Tape::new();
                let s = tape.leaf(&encoded);
                let t = encode_block(&mut tape, &self.params, &self.vocab.encode(cand), self.config.width)?;
                let sim = similarity_matrix(&mut tape, s, t)?;
                let logit = pool_and_score_logit(&mut tape, &self.params, sim, self.config.k_pool, &mut Dropout::eval())?;
                let score = tape.sigmoid(logit);
                Ok(tape.scalar_value(score))
            })
            .collect()
    }

    /// Index and score of the most relevant candidate; ties go to the lowest index.
    pub fn best_template(&self, article: &[String], candidates: &[Vec<String>]) -> Result<(usize, f64)> {
        if candidates.is_empty() {
            return Err(Error::Usage("best_template: no candidates".into()));
        }
        let scores = self.score_candidates(article, candidates)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        Ok((best, scores[best]))
    }

    /// Candidate indices ordered by descending score (stable on ties).
    pub fn rank(&self, article: &[String], candidates: &[Vec<String>]) -> Result<Vec<usize>> {
        let scores = self.score_candidates(article, candidates)?;
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(order)
    }
}
