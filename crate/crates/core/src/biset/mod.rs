//! Template-guided summarizer.
//!
//! Article and template are encoded by separate BiLSTMs over a shared
//! embedding table. In the default variant the template filters the article
//! states through a per-position gate, and a scalar confidence decides how
//! much of the filtered representation to use. Three simpler interaction
//! layers are available for comparison. An attention LSTM decoder generates
//! the summary with beam search.

mod beam;
mod lstm;
mod model;
mod train;

use crate::error::{Error, Result};
use crate::ndtensor::{Dropout, ParamStore, Tape, Tensor};
use crate::vocab::{Vocab, BOS, EOS, PAD};

pub use beam::{beam_search, Hypothesis};
pub use lstm::EncodedSequence;
pub use model::{
    a2t_blend, a2t_confidence, decoder_step, embed, encode, init_decoder, init_params, interact, interact_concat,
    interact_dcn, output_log_probs, prepare, self_attention, t2a_gate, teacher_forced_nll, BisetConfig, Interaction,
    Side, TapeState, A2T_B_D, A2T_W_D, ATTN_W_C, DCN_W0, EMBEDDING, OUT_W_HA, OUT_W_P, T2A_B_S, T2A_W_SH, T2A_W_TH,
};
pub use train::{dataset_nll, default_train_config, train_biset, BisetExample};

pub const DEFAULT_BEAM: usize = 5;

/// Decoder recurrent state outside a tape: `(h, c)` per layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecoderState {
    pub layers: Vec<(Tensor, Tensor)>,
}

/// Encoded inputs ready for decoding.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// Rows the decoder attends over.
    pub memory: Tensor,
    pub state: DecoderState,
}

#[derive(Clone, Debug)]
pub struct Biset {
    pub config: BisetConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
}

impl Biset {
    pub fn new(config: BisetConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        let params = init_params(&config, vocab.len(), seed)?;
        Ok(Biset { config, vocab, params })
    }

    /// Wraps loaded parameters after checking that they have exactly the
    /// names and shapes `config` calls for.
    pub fn from_params(config: BisetConfig, vocab: Vocab, params: ParamStore) -> Result<Self> {
        let expected = init_params(&config, vocab.len(), 0)?;
        let shapes = |s: &ParamStore| s.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect::<Vec<_>>();
        if shapes(&expected) != shapes(&params) {
            return Err(Error::Data("summarizer checkpoint does not match its configuration".into()));
        }
        Ok(Biset { config, vocab, params })
    }

    /// Encodes article and template and initializes the decoder.
    pub fn prepare(&self, article: &[String], template: &[String]) -> Result<Prepared> {
        let mut tape = Tape::new();
        let (memory, state) = prepare(
            &mut tape,
            &self.params,
            &self.config,
            &self.vocab.encode(article),
            &self.vocab.encode(template),
            &mut Dropout::eval(),
        )?;
        let layers = state.iter().map(|&(h, c)| (tape.to_tensor(h), tape.to_tensor(c))).collect();
        Ok(Prepared { memory: tape.to_tensor(memory), state: DecoderState { layers } })
    }

    /// Log-probabilities of the next token and the updated state.
    pub fn step_log_probs(&self, prev: usize, state: &DecoderState, memory: &Tensor) -> Result<(Vec<f64>, DecoderState)> {
        if state.layers.is_empty() {
            return Err(Error::Usage("decoder state is not initialized".into()));
        }
        let mut tape = Tape::new();
        let vars: TapeState = state.layers.iter().map(|(h, c)| (tape.leaf(h), tape.leaf(c))).collect();
        let mem = tape.leaf(memory);
        let (ha, _, next) = decoder_step(&mut tape, &self.params, &self.config, prev, &vars, mem, &mut Dropout::eval())?;
        let logp = output_log_probs(&mut tape, &self.params, ha)?;
        let layers = next.iter().map(|&(h, c)| (tape.to_tensor(h), tape.to_tensor(c))).collect();
        Ok((tape.value(logp).to_vec(), DecoderState { layers }))
    }

    /// Next-token distribution and the updated state.
    pub fn decode_step(&self, prev: usize, state: &DecoderState, memory: &Tensor) -> Result<(Vec<f64>, DecoderState)> {
        let (logp, next) = self.step_log_probs(prev, state, memory)?;
        Ok((logp.into_iter().map(f64::exp).collect(), next))
    }

    /// Beam-search decoding of token ids (end token stripped).
    pub fn summarize_ids(&self, article: &[String], template: &[String], beam: usize) -> Result<Hypothesis<DecoderState>> {
        let prepared = self.prepare(article, template)?;
        let memory = prepared.memory;
        beam_search(prepared.state, BOS, EOS, beam, self.config.max_decode_len, &[PAD, BOS], |state, prev| {
            self.step_log_probs(prev, state, &memory)
        })
    }

    pub fn summarize(&self, article: &[String], template: &[String], beam: usize) -> Result<Vec<String>> {
        Ok(self.vocab.decode(&self.summarize_ids(article, template, beam)?.tokens))
    }
}
