use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{bilstm, insert_cell, Cell, EncodedSequence};
use crate::error::{Error, Result};
use crate::ndtensor::{Dropout, ParamStore, Tape, Tensor, Var};

/// How article and template representations are combined before decoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Interaction {
    /// Template-to-article gate followed by the article-to-template mix.
    #[default]
    Biset,
    /// Template states appended after the article states.
    Concat,
    /// Concatenation followed by multi-head self-attention.
    ConcatSelfAttention,
    /// Coattention over the article/template similarity matrix.
    Dcn,
}

impl Interaction {
    pub const ALL: [Interaction; 4] =
        [Interaction::Biset, Interaction::Concat, Interaction::ConcatSelfAttention, Interaction::Dcn];

    pub fn key(self) -> &'static str {
        match self {
            Interaction::Biset => "biset",
            Interaction::Concat => "concat",
            Interaction::ConcatSelfAttention => "concat_selfatt",
            Interaction::Dcn => "dcn",
        }
    }
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Interaction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Interaction::ALL
            .into_iter()
            .find(|i| i.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown interaction '{s}' (biset, concat, concat_selfatt, dcn)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BisetConfig {
    pub emb_dim: usize,
    /// LSTM hidden size per direction; bidirectional states are twice this.
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub interaction: Interaction,
    pub disable_t2a: bool,
    pub disable_a2t: bool,
    pub heads: usize,
    pub init_scale: f64,
    pub max_decode_len: usize,
}

impl Default for BisetConfig {
    fn default() -> Self {
        BisetConfig {
            emb_dim: 500,
            hidden: 500,
            layers: 2,
            dropout: 0.3,
            interaction: Interaction::Biset,
            disable_t2a: false,
            disable_a2t: false,
            heads: 4,
            init_scale: 0.08,
            max_decode_len: 25,
        }
    }
}

impl BisetConfig {
    /// Width of one encoder state.
    pub fn state_width(&self) -> usize {
        2 * self.hidden
    }

    /// Width of the rows the decoder attends over.
    pub fn memory_width(&self) -> usize {
        match self.interaction {
            Interaction::Dcn => 4 * self.state_width(),
            _ => self.state_width(),
        }
    }

    fn uses_t2a(&self) -> bool {
        self.interaction == Interaction::Biset && !self.disable_t2a
    }

    fn uses_a2t(&self) -> bool {
        self.uses_t2a() && !self.disable_a2t
    }

    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("biset sizes and layer count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("biset dropout {} outside [0, 1)", self.dropout)));
        }
        if self.interaction == Interaction::ConcatSelfAttention
            && (self.heads == 0 || self.state_width() % self.heads != 0)
        {
            return Err(Error::Config(format!(
                "state width {} is not divisible into {} attention heads",
                self.state_width(),
                self.heads
            )));
        }
        if self.max_decode_len == 0 {
            return Err(Error::Config("max decode length must be at least 1".into()));
        }
        Ok(())
    }
}

pub const EMBEDDING: &str = "emb";
pub const T2A_W_SH: &str = "t2a.w_sh";
pub const T2A_W_TH: &str = "t2a.w_th";
pub const T2A_B_S: &str = "t2a.b_s";
pub const A2T_W_D: &str = "a2t.w_d";
pub const A2T_B_D: &str = "a2t.b_d";
pub const ATTN_W_C: &str = "attn.w_c";
pub const OUT_W_HA: &str = "out.w_ha";
pub const OUT_W_P: &str = "out.w_p";
pub const DCN_W0: &str = "dcn.w0";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Article,
    Template,
}

impl Side {
    fn prefix(self) -> &'static str {
        match self {
            Side::Article => "enc.article",
            Side::Template => "enc.template",
        }
    }
}

/// Fresh parameters, uniform in `[-init_scale, init_scale]` except biases
/// (zero). Only the tensors the configured variant uses are created.
pub fn init_params(cfg: &BisetConfig, vocab_size: usize, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (e, h, s, z, sc) = (cfg.emb_dim, cfg.hidden, cfg.state_width(), cfg.memory_width(), cfg.init_scale);
    let mut p = ParamStore::new();
    p.insert(EMBEDDING, Tensor::uniform(vec![vocab_size, e], sc, &mut rng));
    for side in [Side::Article, Side::Template] {
        for l in 0..cfg.layers {
            let input = if l == 0 { e } else { s };
            for dir in ["fwd", "bwd"] {
                insert_cell(&mut p, &format!("{}.l{l}.{dir}", side.prefix()), input, h, sc, &mut rng);
            }
        }
    }
    if cfg.uses_t2a() {
        p.insert(T2A_W_SH, Tensor::uniform(vec![s, s], sc, &mut rng));
        p.insert(T2A_W_TH, Tensor::uniform(vec![s, s], sc, &mut rng));
        p.insert(T2A_B_S, Tensor::zeros(vec![s]));
    }
    if cfg.uses_a2t() {
        p.insert(A2T_W_D, Tensor::uniform(vec![s, s], sc, &mut rng));
        p.insert(A2T_B_D, Tensor::scalar(0.0));
    }
    match cfg.interaction {
        Interaction::ConcatSelfAttention => {
            for name in ["satt.wq", "satt.wk", "satt.wv", "satt.wo"] {
                p.insert(name, Tensor::uniform(vec![s, s], sc, &mut rng));
            }
        }
        Interaction::Dcn => p.insert(DCN_W0, Tensor::uniform(vec![3 * s], sc, &mut rng)),
        _ => {}
    }
    for l in 0..cfg.layers {
        for part in ["h", "c"] {
            p.insert(format!("dec.init.l{l}.{part}_w"), Tensor::uniform(vec![h, s], sc, &mut rng));
            p.insert(format!("dec.init.l{l}.{part}_b"), Tensor::zeros(vec![h]));
        }
        insert_cell(&mut p, &format!("dec.l{l}"), if l == 0 { e } else { h }, h, sc, &mut rng);
    }
    p.insert(ATTN_W_C, Tensor::uniform(vec![z, h], sc, &mut rng));
    p.insert(OUT_W_HA, Tensor::uniform(vec![h, z + h], sc, &mut rng));
    p.insert(OUT_W_P, Tensor::uniform(vec![vocab_size, h], sc, &mut rng));
    Ok(p)
}

pub fn embed(tape: &mut Tape, params: &ParamStore, ids: &[usize]) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::shape("cannot encode an empty sequence"));
    }
    let emb = tape.param(params, EMBEDDING)?;
    tape.gather_rows(emb, ids)
}

/// BiLSTM encoding of one side. Both sides share the embedding table but
/// have separate recurrent weights.
pub fn encode(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &BisetConfig,
    ids: &[usize],
    side: Side,
    dropout: &mut Dropout,
) -> Result<EncodedSequence> {
    let x = embed(tape, params, ids)?;
    bilstm(tape, params, side.prefix(), cfg.layers, x, dropout)
}

/// `g_i = sigmoid(W_sh h_i^s + W_th h^t + b_s)`. Returns `(h^g, g)` with
/// `h^g_i = h^s_i * g_i`.
pub fn t2a_gate(tape: &mut Tape, params: &ParamStore, hs: Var, ht_vec: Var) -> Result<(Var, Var)> {
    let w_sh = tape.param(params, T2A_W_SH)?;
    let w_th = tape.param(params, T2A_W_TH)?;
    let b_s = tape.param(params, T2A_B_S)?;
    let w_sh_t = tape.transpose(w_sh)?;
    let per_pos = tape.matmul(hs, w_sh_t)?;
    let shared = tape.matmul(w_th, ht_vec)?;
    let shared = tape.add(shared, b_s)?;
    let pre = tape.add_row(per_pos, shared)?;
    let g = tape.sigmoid(pre);
    let hg = tape.mul(hs, g)?;
    Ok((hg, g))
}

/// Scalar confidence `d = sigmoid((h^s)^T W_d h^t + b_d)`.
pub fn a2t_confidence(tape: &mut Tape, params: &ParamStore, hs_vec: Var, ht_vec: Var) -> Result<Var> {
    let w_d = tape.param(params, A2T_W_D)?;
    let b_d = tape.param(params, A2T_B_D)?;
    let wt = tape.matmul(w_d, ht_vec)?;
    let bilinear = tape.matmul(hs_vec, wt)?;
    let pre = tape.add(bilinear, b_d)?;
    Ok(tape.sigmoid(pre))
}

/// `z_i = d * h^g_i + (1 - d) * h^s_i`. Exact at `d = 0` and `d = 1`.
pub fn a2t_blend(tape: &mut Tape, hs: Var, hg: Var, d: Var) -> Result<Var> {
    if tape.shape(hs) != tape.shape(hg) {
        return Err(Error::shape("a2t_blend: gated and original states differ in shape"));
    }
    let neg = tape.scale(d, -1.0);
    let one_minus = tape.add_scalar(neg, 1.0);
    let a = tape.mul_scalar(hg, d)?;
    let b = tape.mul_scalar(hs, one_minus)?;
    tape.add(a, b)
}

pub fn interact_concat(tape: &mut Tape, hs: Var, ht: Var) -> Result<Var> {
    tape.concat_rows(&[hs, ht])
}

/// Multi-head scaled dot-product self-attention over the rows of `z`.
/// Returns the output and each head's attention matrix.
pub fn self_attention(tape: &mut Tape, params: &ParamStore, z: Var, heads: usize) -> Result<(Var, Vec<Var>)> {
    let width = tape.dims(z).1;
    if heads == 0 || width % heads != 0 {
        return Err(Error::Config(format!("width {width} is not divisible into {heads} heads")));
    }
    let dh = width / heads;
    let project = |tape: &mut Tape, name: &str| -> Result<Var> {
        let w = tape.param(params, name)?;
        let wt = tape.transpose(w)?;
        tape.matmul(z, wt)
    };
    let q = project(tape, "satt.wq")?;
    let k = project(tape, "satt.wk")?;
    let v = project(tape, "satt.wv")?;
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let a = tape.softmax_rows(scores)?;
        outs.push(tape.matmul(a, vh)?);
        weights.push(a);
    }
    let joined = tape.concat_cols(&outs)?;
    let wo = tape.param(params, "satt.wo")?;
    let wo_t = tape.transpose(wo)?;
    Ok((tape.matmul(joined, wo_t)?, weights))
}

/// Coattention: `z_i = [h^s_i; A_i; h^s_i * A_i; h^s_i * B_i]` with
/// `A = rowsoftmax(S) h^t` and `B = rowsoftmax(S) colsoftmax(S)^T h^s`.
pub fn interact_dcn(tape: &mut Tape, params: &ParamStore, hs: Var, ht: Var) -> Result<Var> {
    let s = tape.dims(hs).1;
    if tape.dims(ht).1 != s {
        return Err(Error::shape("dcn: article and template widths differ"));
    }
    let w0 = tape.param(params, DCN_W0)?;
    let w_s = tape.slice_cols(w0, 0, s)?;
    let w_t = tape.slice_cols(w0, s, s)?;
    let w_st = tape.slice_cols(w0, 2 * s, s)?;
    let a_term = tape.matmul(hs, w_s)?;
    let t_term = tape.matmul(ht, w_t)?;
    let scaled = tape.mul_row(hs, w_st)?;
    let ht_t = tape.transpose(ht)?;
    let cross = tape.matmul(scaled, ht_t)?;
    let sim = tape.add_col(cross, a_term)?;
    let sim = tape.add_row(sim, t_term)?;

    let row_norm = tape.softmax_rows(sim)?;
    let sim_t = tape.transpose(sim)?;
    let col_norm_t = tape.softmax_rows(sim_t)?;
    let a = tape.matmul(row_norm, ht)?;
    let t2a = tape.matmul(col_norm_t, hs)?;
    let b = tape.matmul(row_norm, t2a)?;
    let sa = tape.mul(hs, a)?;
    let sb = tape.mul(hs, b)?;
    tape.concat_cols(&[hs, a, sa, sb])
}

/// The representation the decoder attends over, per configured variant.
pub fn interact(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &BisetConfig,
    article: &EncodedSequence,
    template: &EncodedSequence,
) -> Result<Var> {
    match cfg.interaction {
        Interaction::Biset => {
            if cfg.disable_t2a {
                return Ok(article.states);
            }
            let (hg, _) = t2a_gate(tape, params, article.states, template.summary)?;
            if cfg.disable_a2t {
                return Ok(hg);
            }
            let d = a2t_confidence(tape, params, article.summary, template.summary)?;
            a2t_blend(tape, article.states, hg, d)
        }
        Interaction::Concat => interact_concat(tape, article.states, template.states),
        Interaction::ConcatSelfAttention => {
            let z = interact_concat(tape, article.states, template.states)?;
            Ok(self_attention(tape, params, z, cfg.heads)?.0)
        }
        Interaction::Dcn => interact_dcn(tape, params, article.states, template.states),
    }
}

/// Per-layer `(h, c)` decoder state on a tape.
pub type TapeState = Vec<(Var, Var)>;

/// Linear projection of the article summary vector to every layer's
/// initial hidden and cell state.
pub fn init_decoder(tape: &mut Tape, params: &ParamStore, cfg: &BisetConfig, hs_vec: Var) -> Result<TapeState> {
    (0..cfg.layers)
        .map(|l| {
            let mut proj = |part: &str| -> Result<Var> {
                let w = tape.param(params, &format!("dec.init.l{l}.{part}_w"))?;
                let b = tape.param(params, &format!("dec.init.l{l}.{part}_b"))?;
                let y = tape.matmul(w, hs_vec)?;
                tape.add(y, b)
            };
            Ok((proj("h")?, proj("c")?))
        })
        .collect()
}

/// One decoder step up to the attentional hidden state
/// `h^a = tanh(W_ha [c_t; h^c_t])`. Also returns the attention weights.
pub fn decoder_step(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &BisetConfig,
    prev_token: usize,
    state: &[(Var, Var)],
    memory: Var,
    dropout: &mut Dropout,
) -> Result<(Var, Var, TapeState)> {
    if state.len() != cfg.layers {
        return Err(Error::Usage(format!(
            "decoder state has {} layers, expected {}",
            state.len(),
            cfg.layers
        )));
    }
    let emb = tape.param(params, EMBEDDING)?;
    let mut x = tape.row(emb, prev_token)?;
    let mut next = Vec::with_capacity(cfg.layers);
    for (l, &(h, c)) in state.iter().enumerate() {
        let cell = Cell::load(tape, params, &format!("dec.l{l}"))?;
        let (h, c) = cell.step_input(tape, x, h, c)?;
        next.push((h, c));
        x = if l + 1 < cfg.layers { dropout.apply(tape, h)? } else { h };
    }
    let hc = x;
    let w_c = tape.param(params, ATTN_W_C)?;
    let u = tape.matmul(w_c, hc)?;
    let scores = tape.matmul(memory, u)?;
    let alpha = tape.softmax_rows(scores)?;
    let ctx = tape.matmul(alpha, memory)?;
    let joined = tape.concat_cols(&[ctx, hc])?;
    let w_ha = tape.param(params, OUT_W_HA)?;
    let ha = tape.matmul(w_ha, joined)?;
    Ok((tape.tanh(ha), alpha, next))
}

/// Log-probabilities over the vocabulary for each row of `ha` (`[T x H]`
/// gives `[T x V]`; a vector gives a vector).
pub fn output_log_probs(tape: &mut Tape, params: &ParamStore, ha: Var) -> Result<Var> {
    let w_p = tape.param(params, OUT_W_P)?;
    let logits = if tape.shape(ha).len() == 1 {
        tape.matmul(w_p, ha)?
    } else {
        let wt = tape.transpose(w_p)?;
        tape.matmul(ha, wt)?
    };
    tape.log_softmax_rows(logits)
}

/// Encodes both inputs, applies the interaction layer and initializes the
/// decoder. Returns `(memory, state)`.
pub fn prepare(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &BisetConfig,
    article: &[usize],
    template: &[usize],
    dropout: &mut Dropout,
) -> Result<(Var, TapeState)> {
    let a = encode(tape, params, cfg, article, Side::Article, dropout)?;
    let t = encode(tape, params, cfg, template, Side::Template, dropout)?;
    let memory = interact(tape, params, cfg, &a, &t)?;
    let state = init_decoder(tape, params, cfg, a.summary)?;
    Ok((memory, state))
}

/// Summed negative log-likelihood of `targets` under teacher forcing with
/// decoder inputs `inputs` (same length).
#[allow(clippy::too_many_arguments)]
pub fn teacher_forced_nll(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &BisetConfig,
    article: &[usize],
    template: &[usize],
    inputs: &[usize],
    targets: &[usize],
    dropout: &mut Dropout,
) -> Result<Var> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::shape("teacher forcing needs equally long, non-empty inputs and targets"));
    }
    let (memory, mut state) = prepare(tape, params, cfg, article, template, dropout)?;
    let mut rows = Vec::with_capacity(inputs.len());
    for &tok in inputs {
        let (ha, _, next) = decoder_step(tape, params, cfg, tok, &state, memory, dropout)?;
        rows.push(ha);
        state = next;
    }
    let ha = tape.concat_rows(&rows)?;
    let logp = output_log_probs(tape, params, ha)?;
    let picked = tape.pick(logp, targets)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0))
}
