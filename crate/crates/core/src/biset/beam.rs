use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A finished or partial decoding hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis<S> {
    /// Generated tokens, without the start token and without the end token.
    pub tokens: Vec<usize>,
    pub logp: f64,
    /// True when the hypothesis ended with the end token.
    pub complete: bool,
    pub state: S,
}

fn rank<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> Ordering {
    b.logp.total_cmp(&a.logp).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Length-capped beam search.
///
/// `step(state, prev_token)` returns log-probabilities over the vocabulary
/// and the next state. At every step all expansions of the live hypotheses
/// are ranked by log-probability (ties: lexicographically smaller token
/// sequence first, so siblings are ordered by token id and a completed
/// hypothesis precedes its continuations) and the best `beam` are kept.
/// Kept expansions ending in `eos` are complete and leave the beam.
/// `max_len` counts generated tokens including the end token. Tokens in
/// `banned` are never generated.
///
/// Returns the best complete hypothesis, or the best live one if nothing
/// completed within `max_len` steps.
pub fn beam_search<S, F>(
    init: S,
    bos: usize,
    eos: usize,
    beam: usize,
    max_len: usize,
    banned: &[usize],
    mut step: F,
) -> Result<Hypothesis<S>>
where
    S: Clone,
    F: FnMut(&S, usize) -> Result<(Vec<f64>, S)>,
{
    if beam == 0 {
        return Err(Error::Usage("beam size must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Usage("max decode length must be at least 1".into()));
    }
    let mut live = vec![Hypothesis { tokens: Vec::new(), logp: 0.0, complete: false, state: init }];
    let mut done: Vec<Hypothesis<S>> = Vec::new();

    for _ in 0..max_len {
        let mut expansions = Vec::new();
        for hyp in &live {
            let prev = hyp.tokens.last().copied().unwrap_or(bos);
            let (logp, next) = step(&hyp.state, prev)?;
            for (tok, &lp) in logp.iter().enumerate() {
                if banned.contains(&tok) || lp == f64::NEG_INFINITY {
                    continue;
                }
                let complete = tok == eos;
                let mut tokens = hyp.tokens.clone();
                if !complete {
                    tokens.push(tok);
                }
                expansions.push(Hypothesis { tokens, logp: hyp.logp + lp, complete, state: next.clone() });
            }
        }
        expansions.sort_by(rank);
        expansions.truncate(beam);
        live.clear();
        for h in expansions {
            if h.complete {
                done.push(h);
            } else {
                live.push(h);
            }
        }
        let best_done = done.iter().map(|h| h.logp).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|h| h.logp).fold(f64::NEG_INFINITY, f64::max);
        // extending a hypothesis can only lower its log-probability
        if live.is_empty() || best_done >= best_live {
            break;
        }
    }
    done.sort_by(rank);
    if let Some(best) = done.into_iter().next() {
        return Ok(best);
    }
    live.sort_by(rank);
    live.into_iter().next().ok_or_else(|| Error::Usage("beam search produced no hypothesis".into()))
}
